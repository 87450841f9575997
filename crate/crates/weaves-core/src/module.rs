//! Module definitions: the unit of composition.
//!
//! A module is ordinary code plus a declared schema of global symbols. The
//! code is a set of named entries; each entry is a Rust closure that runs
//! against a [`Ctx`](crate::runtime::Ctx) and reaches its globals through
//! the executing string's weave, never through process-global state. The
//! same module can therefore be instantiated many times (as beads) and the
//! instances composed into independent namespaces.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::CoreError;
use crate::runtime::Ctx;
use crate::value::{Value, ValueKind};
use crate::RtError;

/// One declared global of a module.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolDef {
    pub name: String,
    pub kind: ValueKind,
    pub initial: Value,
}

impl SymbolDef {
    pub fn new(name: &str, kind: ValueKind) -> Self {
        let initial = kind.default_value();
        SymbolDef { name: name.to_string(), kind, initial }
    }

    pub fn with_initial(name: &str, kind: ValueKind, initial: Value) -> Self {
        SymbolDef { name: name.to_string(), kind, initial }
    }
}

/// Entry body type: guest code invoked on a string.
pub type EntryBody = Arc<dyn Fn(&Ctx) -> Result<(), RtError> + Send + Sync>;

/// A module definition, ready to be registered with a runtime.
#[derive(Clone)]
pub struct ModuleDef {
    pub name: String,
    pub symbols: Vec<SymbolDef>,
    pub entries: BTreeMap<String, EntryBody>,
    /// Reentrant modules opt out of the shared-bead switching restriction:
    /// their entries tolerate another string of the same equivalence class
    /// running in the same bead frame.
    pub reentrant: bool,
}

impl ModuleDef {
    pub fn new(name: &str) -> Self {
        ModuleDef {
            name: name.to_string(),
            symbols: Vec::new(),
            entries: BTreeMap::new(),
            reentrant: false,
        }
    }

    pub fn symbol(mut self, name: &str, kind: ValueKind) -> Self {
        self.symbols.push(SymbolDef::new(name, kind));
        self
    }

    pub fn symbol_init(mut self, name: &str, kind: ValueKind, initial: Value) -> Self {
        self.symbols.push(SymbolDef::with_initial(name, kind, initial));
        self
    }

    pub fn entry<F>(mut self, name: &str, body: F) -> Self
    where
        F: Fn(&Ctx) -> Result<(), RtError> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Arc::new(body));
        self
    }

    pub fn reentrant(mut self) -> Self {
        self.reentrant = true;
        self
    }

    /// Schema validation performed at registration time.
    pub(crate) fn validate(&self) -> Result<(), CoreError> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.symbols {
            if !seen.insert(s.name.as_str()) {
                return Err(CoreError::DuplicateSymbol(self.name.clone(), s.name.clone()));
            }
            if !s.kind.admits(&s.initial) {
                return Err(CoreError::BadInitial {
                    module: self.name.clone(),
                    symbol: s.name.clone(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Debug for ModuleDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModuleDef")
            .field("name", &self.name)
            .field("symbols", &self.symbols)
            .field("entries", &self.entries.keys().collect::<Vec<_>>())
            .field("reentrant", &self.reentrant)
            .finish()
    }
}

/// A named collection of module definitions, used when instantiating a
/// tapestry from its textual form and when inserting modules at runtime.
#[derive(Clone, Default)]
pub struct ModuleLibrary {
    modules: BTreeMap<String, ModuleDef>,
}

impl ModuleLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, def: ModuleDef) {
        self.modules.insert(def.name.clone(), def);
    }

    pub fn get(&self, name: &str) -> Option<&ModuleDef> {
        self.modules.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.modules.keys().map(|s| s.as_str())
    }
}

impl fmt::Debug for ModuleLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModuleLibrary")
            .field("modules", &self.modules.keys().collect::<Vec<_>>())
            .finish()
    }
}
