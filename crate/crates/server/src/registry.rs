use std::collections::BTreeMap;
use std::fmt;

use duplexcap_core::{Face, Millis};
use serde::{Deserialize, Serialize};

use crate::wire::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u64);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "client-{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientRegistration {
    pub client_id: ClientId,
    pub role: Role,
    pub connected_at: Millis,
}

/// Active clients: at most one per face, any number of control clients.
#[derive(Debug, Default)]
pub struct Registry {
    clients: BTreeMap<ClientId, ClientRegistration>,
    dhh: Option<ClientId>,
    hearing: Option<ClientId>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&mut self, face: Face) -> &mut Option<ClientId> {
        match face {
            Face::Dhh => &mut self.dhh,
            Face::Hearing => &mut self.hearing,
        }
    }

    /// Adds a client. A face client displaces the previous holder of its
    /// face, which is removed and returned.
    pub fn register(&mut self, reg: ClientRegistration) -> Option<ClientRegistration> {
        let id = reg.client_id;
        let displaced = reg
            .role
            .face()
            .and_then(|face| self.slot(face).replace(id))
            .and_then(|old| self.clients.remove(&old));
        self.clients.insert(id, reg);
        displaced
    }

    pub fn unregister(&mut self, id: ClientId) -> Option<ClientRegistration> {
        let reg = self.clients.remove(&id)?;
        if let Some(face) = reg.role.face() {
            let slot = self.slot(face);
            if *slot == Some(id) {
                *slot = None;
            }
        }
        Some(reg)
    }

    pub fn get(&self, id: ClientId) -> Option<&ClientRegistration> {
        self.clients.get(&id)
    }

    pub fn face_client(&self, face: Face) -> Option<ClientId> {
        match face {
            Face::Dhh => self.dhh,
            Face::Hearing => self.hearing,
        }
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.clients.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(id: u64, role: Role) -> ClientRegistration {
        ClientRegistration { client_id: ClientId(id), role, connected_at: id as Millis }
    }

    #[test]
    fn second_face_client_displaces_first() {
        let mut r = Registry::new();
        assert!(r.register(reg(1, Role::FaceDhh)).is_none());
        let displaced = r.register(reg(2, Role::FaceDhh)).unwrap();
        assert_eq!(displaced.client_id, ClientId(1));
        assert_eq!(r.face_client(Face::Dhh), Some(ClientId(2)));
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn control_clients_accumulate() {
        let mut r = Registry::new();
        for i in 0..3 {
            assert!(r.register(reg(i, Role::Control)).is_none());
        }
        r.register(reg(9, Role::FaceHearing));
        assert_eq!(r.len(), 4);
        assert_eq!(r.face_client(Face::Hearing), Some(ClientId(9)));
        assert_eq!(r.face_client(Face::Dhh), None);
    }

    #[test]
    fn unregistering_displaced_client_keeps_new_holder() {
        let mut r = Registry::new();
        r.register(reg(1, Role::FaceHearing));
        r.register(reg(2, Role::FaceHearing));
        assert!(r.unregister(ClientId(1)).is_none());
        assert_eq!(r.face_client(Face::Hearing), Some(ClientId(2)));
        r.unregister(ClientId(2));
        assert_eq!(r.face_client(Face::Hearing), None);
        assert!(r.is_empty());
    }
}
