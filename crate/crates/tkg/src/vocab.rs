use std::collections::HashMap;

use crate::error::{Result, TkgError};

/// Bidirectional symbol table. Ids are dense and assigned in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for n in names {
            v.intern(n.into());
        }
        v
    }

    /// Numbered vocabulary `prefix0, prefix1, ...`.
    pub fn numbered(prefix: &str, count: usize) -> Self {
        Self::from_names((0..count).map(|i| format!("{prefix}{i}")))
    }

    pub fn intern(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&id) = self.index.get(&name) {
            return id;
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn lookup(&self, name: &str, kind: &'static str) -> Result<usize> {
        self.get(name).ok_or_else(|| TkgError::UnknownSymbol {
            kind,
            name: name.to_string(),
        })
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn check(&self, id: usize, kind: &'static str) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(TkgError::IdOutOfRange {
                kind,
                id,
                size: self.len(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intern_is_idempotent() {
        let mut v = Vocab::new();
        assert_eq!(v.intern("a"), 0);
        assert_eq!(v.intern("b"), 1);
        assert_eq!(v.intern("a"), 0);
        assert_eq!(v.len(), 2);
        assert_eq!(v.name(1), "b");
    }

    #[test]
    fn lookup_unknown_fails() {
        let v = Vocab::numbered("e", 3);
        assert_eq!(v.lookup("e2", "entity").unwrap(), 2);
        assert!(v.lookup("e3", "entity").is_err());
    }
}
