//! Globally interned variable symbols.
//!
//! Every polynomial variable (state components, the kernel arguments `theta`
//! and `omega`, uncertain parameters) is interned once into a process-wide
//! table and referred to by a small copyable id. A fixed global order on ids
//! keeps monomial orderings and Gram-matrix indexing stable across the whole
//! problem assembly.

use std::fmt;
use std::sync::{Mutex, OnceLock};

/// An interned polynomial variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(u32);

struct Interner {
    names: Vec<String>,
}

fn table() -> &'static Mutex<Interner> {
    static TABLE: OnceLock<Mutex<Interner>> = OnceLock::new();
    TABLE.get_or_init(|| Mutex::new(Interner { names: Vec::new() }))
}

impl Symbol {
    /// Interns `name`, returning the existing symbol if already present.
    pub fn new(name: &str) -> Symbol {
        let mut t = table().lock().unwrap();
        if let Some(ix) = t.names.iter().position(|n| n == name) {
            return Symbol(ix as u32);
        }
        t.names.push(name.to_owned());
        Symbol((t.names.len() - 1) as u32)
    }

    /// The interned name.
    pub fn name(&self) -> String {
        table().lock().unwrap().names[self.0 as usize].clone()
    }

    pub fn index(&self) -> u32 {
        self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Interns an indexed family `base1 .. basen`, e.g. state components.
pub fn symbol_family(base: &str, n: usize) -> Vec<Symbol> {
    (1..=n).map(|i| Symbol::new(&format!("{base}{i}"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_idempotent() {
        let a = Symbol::new("intern_test_a");
        let b = Symbol::new("intern_test_b");
        assert_ne!(a, b);
        assert_eq!(a, Symbol::new("intern_test_a"));
        assert_eq!(a.name(), "intern_test_a");
    }

    #[test]
    fn families_are_ordered() {
        let xs = symbol_family("intern_test_x", 3);
        assert_eq!(xs.len(), 3);
        assert!(xs[0] < xs[1] && xs[1] < xs[2]);
    }
}
