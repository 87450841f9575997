//! Namespace composition: beads, weaves, tuple spaces, indirection tables.
//!
//! A bead is one instantiation of a module: a private set of cells, one per
//! declared symbol. A weave picks at most one bead per module and realizes a
//! complete namespace as an indirection table mapping `(module, symbol)` to
//! a cell. Because every weave owns such a table, pointing an executing
//! string at a different namespace is a table-handle swap — cost independent
//! of how many symbols, beads, or weaves exist.
//!
//! Tuple spaces relax bead privacy selectively: a declared member symbol is
//! backed by one shared cell across all beads of a group, while the module's
//! remaining symbols stay private per bead. Merging happens at bead creation
//! time, so groups must be declared before their beads exist.

use std::cell::Cell as StdCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::CoreError;
use crate::module::{ModuleDef, SymbolDef};
use crate::value::Value;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(ModuleId);
id_type!(BeadId);
id_type!(WeaveId);
id_type!(CellId);
id_type!(TupleSpaceId);

pub(crate) struct ModuleData {
    pub def: ModuleDef,
    /// symbol name -> index into `def.symbols`
    pub index: HashMap<String, u32>,
}

#[derive(Debug)]
pub(crate) struct BeadData {
    pub name: String,
    pub module: ModuleId,
    /// One bound cell per symbol index. After tuple-space merging, several
    /// beads' slots may name the same cell.
    pub cells: Vec<CellId>,
}

#[derive(Debug)]
pub(crate) struct CellData {
    pub value: Value,
    /// The (bead, symbol-index) that created this cell.
    pub owner: (BeadId, u32),
}

#[derive(Debug)]
pub(crate) struct WeaveData {
    pub name: String,
    pub beads: Vec<BeadId>,
    pub by_module: HashMap<ModuleId, BeadId>,
    /// The realized namespace: exactly one slot per (module, symbol) pair
    /// for each module with a bead in this weave.
    pub table: HashMap<(ModuleId, u32), CellId>,
}

/// Which beads participate in a tuple-space group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TupleGroup {
    /// Every bead of the module, past and future. Must still be declared
    /// before the first such bead is created.
    AllBeads,
    /// An explicit set of bead ids. Ids are assigned densely in creation
    /// order, so a composition can name beads it is about to create.
    Beads(BTreeSet<u32>),
}

#[derive(Debug)]
pub(crate) struct TupleSpec {
    pub name: String,
    pub module: ModuleId,
    /// Symbol indices shared across the group.
    pub members: Vec<u32>,
    pub group: TupleGroup,
}

/// The structural state of one tapestry: registered modules, instantiated
/// beads, their cells, defined weaves, and declared tuple spaces.
///
/// This type is purely about composition; strings and scheduling live in
/// [`Runtime`](crate::runtime::Runtime), which owns a `Namespaces` and bumps
/// its generation counter on every structural change.
pub struct Namespaces {
    pub(crate) modules: Vec<ModuleData>,
    pub(crate) module_ids: HashMap<String, ModuleId>,
    pub(crate) beads: Vec<BeadData>,
    pub(crate) bead_names: HashMap<String, BeadId>,
    pub(crate) cells: Vec<CellData>,
    pub(crate) weaves: Vec<WeaveData>,
    pub(crate) weave_names: HashMap<String, WeaveId>,
    pub(crate) tuples: Vec<TupleSpec>,
    pub(crate) generation: u64,
    /// Count of weave-table lookups performed by `resolve`, for cost tests.
    lookups: StdCell<u64>,
}

impl Namespaces {
    pub fn new() -> Self {
        Namespaces {
            modules: Vec::new(),
            module_ids: HashMap::new(),
            beads: Vec::new(),
            bead_names: HashMap::new(),
            cells: Vec::new(),
            weaves: Vec::new(),
            weave_names: HashMap::new(),
            tuples: Vec::new(),
            generation: 0,
            lookups: StdCell::new(0),
        }
    }

    /// Monotonic counter bumped on every structural change.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn bump(&mut self) {
        self.generation += 1;
    }

    /// Total weave-table lookups performed so far by `resolve`.
    pub fn resolve_lookups(&self) -> u64 {
        self.lookups.get()
    }

    // --- modules ---------------------------------------------------------

    pub fn register_module(&mut self, def: ModuleDef) -> Result<ModuleId, CoreError> {
        if self.module_ids.contains_key(&def.name) {
            return Err(CoreError::DuplicateModule(def.name));
        }
        def.validate()?;
        let id = ModuleId(self.modules.len() as u32);
        let index = def
            .symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i as u32))
            .collect();
        self.module_ids.insert(def.name.clone(), id);
        self.modules.push(ModuleData { def, index });
        self.bump();
        Ok(id)
    }

    pub fn module_id(&self, name: &str) -> Result<ModuleId, CoreError> {
        self.module_ids
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::UnknownModule(name.to_string()))
    }

    pub fn module_name(&self, id: ModuleId) -> &str {
        &self.modules[id.0 as usize].def.name
    }

    pub fn module_count(&self) -> usize {
        self.modules.len()
    }

    pub fn module_symbols(&self, id: ModuleId) -> &[SymbolDef] {
        &self.modules[id.0 as usize].def.symbols
    }

    pub(crate) fn module(&self, id: ModuleId) -> &ModuleData {
        &self.modules[id.0 as usize]
    }

    pub fn symbol_index(&self, module: ModuleId, symbol: &str) -> Result<u32, CoreError> {
        self.modules[module.0 as usize]
            .index
            .get(symbol)
            .copied()
            .ok_or_else(|| CoreError::UnknownSymbol {
                module: self.module_name(module).to_string(),
                symbol: symbol.to_string(),
            })
    }

    // --- tuple spaces ----------------------------------------------------

    /// Declare that `members` of `module` are shared across `group`.
    /// Must precede creation of any bead in the group; a symbol may belong
    /// to at most one group.
    pub fn declare_tuple_space(
        &mut self,
        name: &str,
        module: ModuleId,
        members: &[&str],
        group: TupleGroup,
    ) -> Result<TupleSpaceId, CoreError> {
        if module.0 as usize >= self.modules.len() {
            return Err(CoreError::UnknownModule(format!("#{}", module.0)));
        }
        let member_idx: Vec<u32> = members
            .iter()
            .map(|m| self.symbol_index(module, m))
            .collect::<Result<_, _>>()?;
        match &group {
            TupleGroup::Beads(set) => {
                if set.is_empty() {
                    return Err(CoreError::EmptyTupleGroup);
                }
                // Declarations must precede their beads.
                if set.iter().any(|&b| (b as usize) < self.beads.len()) {
                    return Err(CoreError::TupleAfterBead(self.module_name(module).to_string()));
                }
            }
            TupleGroup::AllBeads => {
                if self.beads.iter().any(|b| b.module == module) {
                    return Err(CoreError::TupleAfterBead(self.module_name(module).to_string()));
                }
            }
        }
        // A (module, member) pair may appear in at most one group.
        for spec in self.tuples.iter().filter(|s| s.module == module) {
            if let Some(&dup) = member_idx.iter().find(|i| spec.members.contains(i)) {
                return Err(CoreError::TupleOverlap {
                    module: self.module_name(module).to_string(),
                    symbol: self.modules[module.0 as usize].def.symbols[dup as usize]
                        .name
                        .clone(),
                });
            }
        }
        let id = TupleSpaceId(self.tuples.len() as u32);
        self.tuples.push(TupleSpec {
            name: name.to_string(),
            module,
            members: member_idx,
            group,
        });
        self.bump();
        Ok(id)
    }

    fn spec_covers(&self, spec: &TupleSpec, module: ModuleId, bead: BeadId) -> bool {
        spec.module == module
            && match &spec.group {
                TupleGroup::AllBeads => true,
                TupleGroup::Beads(set) => set.contains(&bead.0),
            }
    }

    // --- beads -----------------------------------------------------------

    /// Instantiate `module` as a new bead. Fresh cells are bound for every
    /// symbol, except members of an applicable tuple-space group, which
    /// alias the group's canonical cell (created by the group's first bead).
    pub fn create_bead(&mut self, module: ModuleId, name: Option<&str>) -> Result<BeadId, CoreError> {
        if module.0 as usize >= self.modules.len() {
            return Err(CoreError::UnknownModule(format!("#{}", module.0)));
        }
        let id = BeadId(self.beads.len() as u32);
        let name = match name {
            Some(n) => {
                if self.bead_names.contains_key(n) {
                    return Err(CoreError::DuplicateBeadName(n.to_string()));
                }
                n.to_string()
            }
            None => self.fresh_name(&self.bead_names, "b", id.0),
        };
        // A group naming this bead id must name a bead of its own module.
        for spec in &self.tuples {
            if let TupleGroup::Beads(set) = &spec.group {
                if set.contains(&id.0) && spec.module != module {
                    return Err(CoreError::TupleGroupModuleMismatch {
                        module: self.module_name(spec.module).to_string(),
                        bead: id.0,
                    });
                }
            }
        }

        let n_sym = self.modules[module.0 as usize].def.symbols.len();
        let mut cells = Vec::with_capacity(n_sym);
        for sym in 0..n_sym as u32 {
            let shared = self
                .tuples
                .iter()
                .find(|s| self.spec_covers(s, module, id) && s.members.contains(&sym))
                .and_then(|spec| {
                    // Canonical cell: the earliest existing bead of the group.
                    self.beads
                        .iter()
                        .enumerate()
                        .find(|(b, bd)| {
                            bd.module == module && self.spec_covers(spec, module, BeadId(*b as u32))
                        })
                        .map(|(_, bd)| bd.cells[sym as usize])
                });
            let cell = match shared {
                Some(c) => c,
                None => {
                    let c = CellId(self.cells.len() as u32);
                    self.cells.push(CellData {
                        value: self.modules[module.0 as usize].def.symbols[sym as usize]
                            .initial
                            .clone(),
                        owner: (id, sym),
                    });
                    c
                }
            };
            cells.push(cell);
        }
        self.bead_names.insert(name.clone(), id);
        self.beads.push(BeadData { name, module, cells });
        self.bump();
        Ok(id)
    }

    fn fresh_name<V>(&self, taken: &HashMap<String, V>, prefix: &str, id: u32) -> String {
        let mut name = format!("{prefix}{id}");
        while taken.contains_key(&name) {
            name.push('_');
        }
        name
    }

    pub fn bead_id(&self, name: &str) -> Result<BeadId, CoreError> {
        self.bead_names
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::UnknownBeadName(name.to_string()))
    }

    pub fn bead_name(&self, id: BeadId) -> Result<&str, CoreError> {
        self.beads
            .get(id.0 as usize)
            .map(|b| b.name.as_str())
            .ok_or(CoreError::UnknownBead(id.0))
    }

    pub fn bead_module(&self, id: BeadId) -> Result<ModuleId, CoreError> {
        self.beads
            .get(id.0 as usize)
            .map(|b| b.module)
            .ok_or(CoreError::UnknownBead(id.0))
    }

    pub fn bead_count(&self) -> usize {
        self.beads.len()
    }

    // --- weaves ----------------------------------------------------------

    /// Realize a namespace from `beads`: at most one bead per module. The
    /// weave's indirection table is built here and never mutated afterwards;
    /// recomposition defines new weaves instead of editing existing ones.
    pub fn define_weave(&mut self, beads: &[BeadId], name: Option<&str>) -> Result<WeaveId, CoreError> {
        if beads.is_empty() {
            return Err(CoreError::EmptyWeave);
        }
        let id = WeaveId(self.weaves.len() as u32);
        let name = match name {
            Some(n) => {
                if self.weave_names.contains_key(n) {
                    return Err(CoreError::DuplicateWeaveName(n.to_string()));
                }
                n.to_string()
            }
            None => self.fresh_name(&self.weave_names, "w", id.0),
        };
        let mut by_module = HashMap::new();
        let mut table = HashMap::new();
        for &b in beads {
            let bead = self.beads.get(b.0 as usize).ok_or(CoreError::UnknownBead(b.0))?;
            if by_module.insert(bead.module, b).is_some() {
                return Err(CoreError::ModuleCollision(
                    self.module_name(bead.module).to_string(),
                ));
            }
            for (sym, &cell) in bead.cells.iter().enumerate() {
                table.insert((bead.module, sym as u32), cell);
            }
        }
        self.weave_names.insert(name.clone(), id);
        self.weaves.push(WeaveData {
            name,
            beads: beads.to_vec(),
            by_module,
            table,
        });
        self.bump();
        Ok(id)
    }

    pub fn weave_id(&self, name: &str) -> Result<WeaveId, CoreError> {
        self.weave_names
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::UnknownWeaveName(name.to_string()))
    }

    pub fn weave_name(&self, id: WeaveId) -> Result<&str, CoreError> {
        self.weaves
            .get(id.0 as usize)
            .map(|w| w.name.as_str())
            .ok_or(CoreError::UnknownWeave(id.0))
    }

    pub fn weave_beads(&self, id: WeaveId) -> Result<&[BeadId], CoreError> {
        self.weaves
            .get(id.0 as usize)
            .map(|w| w.beads.as_slice())
            .ok_or(CoreError::UnknownWeave(id.0))
    }

    pub fn weave_count(&self) -> usize {
        self.weaves.len()
    }

    pub(crate) fn weave_bead_of(&self, weave: WeaveId, module: ModuleId) -> Result<BeadId, CoreError> {
        let w = self
            .weaves
            .get(weave.0 as usize)
            .ok_or(CoreError::UnknownWeave(weave.0))?;
        w.by_module
            .get(&module)
            .copied()
            .ok_or_else(|| CoreError::ModuleNotInWeave {
                module: self.module_name(module).to_string(),
                weave: w.name.clone(),
            })
    }

    // --- resolution and cell access ---------------------------------------

    /// Resolve `(module, symbol)` through a weave's indirection table.
    /// The happy path costs exactly one table lookup; the lookup counter
    /// exists so tests can pin that down.
    pub fn resolve(&self, weave: WeaveId, module: ModuleId, symbol: u32) -> Result<CellId, CoreError> {
        let w = self
            .weaves
            .get(weave.0 as usize)
            .ok_or(CoreError::UnknownWeave(weave.0))?;
        self.lookups.set(self.lookups.get() + 1);
        match w.table.get(&(module, symbol)) {
            Some(&c) => Ok(c),
            None => {
                // Error path: disambiguate a missing module from a bad symbol.
                if w.by_module.contains_key(&module) {
                    Err(CoreError::UnknownSymbol {
                        module: self.module_name(module).to_string(),
                        symbol: format!("#{symbol}"),
                    })
                } else {
                    Err(CoreError::ModuleNotInWeave {
                        module: self.module_name(module).to_string(),
                        weave: w.name.clone(),
                    })
                }
            }
        }
    }

    /// Name-based resolve; id translation happens against module metadata
    /// and does not touch the weave table.
    pub fn resolve_named(&self, weave: WeaveId, module: &str, symbol: &str) -> Result<CellId, CoreError> {
        let m = self.module_id(module)?;
        let s = self.symbol_index(m, symbol)?;
        self.resolve(weave, m, s)
    }

    pub fn read_cell(&self, cell: CellId) -> Result<Value, CoreError> {
        self.cells
            .get(cell.0 as usize)
            .map(|c| c.value.clone())
            .ok_or(CoreError::UnknownCell(cell.0))
    }

    pub fn write_cell(&mut self, cell: CellId, value: Value) -> Result<(), CoreError> {
        let (module, symbol, kind) = {
            let c = self
                .cells
                .get(cell.0 as usize)
                .ok_or(CoreError::UnknownCell(cell.0))?;
            let bead = &self.beads[c.owner.0 .0 as usize];
            let sym = &self.modules[bead.module.0 as usize].def.symbols[c.owner.1 as usize];
            (bead.module, sym.name.clone(), sym.kind.clone())
        };
        if !kind.admits(&value) {
            return Err(CoreError::KindMismatch {
                module: self.module_name(module).to_string(),
                symbol,
            });
        }
        self.cells[cell.0 as usize].value = value;
        Ok(())
    }

    /// Keyed snapshot of one weave's namespace: `(module, symbol) -> value`.
    pub fn snapshot(&self, weave: WeaveId) -> Result<BTreeMap<(String, String), Value>, CoreError> {
        let w = self
            .weaves
            .get(weave.0 as usize)
            .ok_or(CoreError::UnknownWeave(weave.0))?;
        let mut out = BTreeMap::new();
        for &b in &w.beads {
            let bead = &self.beads[b.0 as usize];
            let module = &self.modules[bead.module.0 as usize];
            for (sym, &cell) in bead.cells.iter().enumerate() {
                out.insert(
                    (module.def.name.clone(), module.def.symbols[sym].name.clone()),
                    self.cells[cell.0 as usize].value.clone(),
                );
            }
        }
        Ok(out)
    }

    // --- structural self-check ---------------------------------------------

    /// Verify the structural invariants of the whole composition. Used by
    /// fuzz tests and by the monitor after rewiring.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, b) in self.beads.iter().enumerate() {
            let m = &self.modules[b.module.0 as usize];
            if b.cells.len() != m.def.symbols.len() {
                return Err(format!("bead {i}: {} cells for {} symbols", b.cells.len(), m.def.symbols.len()));
            }
            for (sym, &cell) in b.cells.iter().enumerate() {
                let c = self.cells.get(cell.0 as usize).ok_or(format!("bead {i}: dangling cell"))?;
                let owner_bead = &self.beads[c.owner.0 .0 as usize];
                if owner_bead.module != b.module || c.owner.1 as usize >= m.def.symbols.len() {
                    return Err(format!("bead {i} sym {sym}: cell owner inconsistent"));
                }
                // An aliased cell must be bound at the same symbol index.
                if c.owner.1 != sym as u32 {
                    return Err(format!("bead {i} sym {sym}: aliased across symbol indices"));
                }
                if !m.def.symbols[sym].kind.admits(&c.value) {
                    return Err(format!("bead {i} sym {sym}: value does not conform"));
                }
            }
        }
        for (wi, w) in self.weaves.iter().enumerate() {
            let mut modules_seen = std::collections::HashSet::new();
            let mut expect_slots = 0usize;
            for &b in &w.beads {
                let bead = self.beads.get(b.0 as usize).ok_or(format!("weave {wi}: dangling bead"))?;
                if !modules_seen.insert(bead.module) {
                    return Err(format!("weave {wi}: two beads of module {}", self.module_name(bead.module)));
                }
                expect_slots += bead.cells.len();
                for (sym, &cell) in bead.cells.iter().enumerate() {
                    if w.table.get(&(bead.module, sym as u32)) != Some(&cell) {
                        return Err(format!("weave {wi}: slot ({}, {sym}) does not target the bead's cell", self.module_name(bead.module)));
                    }
                }
            }
            if w.table.len() != expect_slots {
                return Err(format!("weave {wi}: {} slots, expected {expect_slots}", w.table.len()));
            }
        }
        // Alias conservation: per (module, symbol), distinct cells =
        // beads of the module minus merges implied by tuple groups.
        for (mi, m) in self.modules.iter().enumerate() {
            let module = ModuleId(mi as u32);
            let beads_of: Vec<BeadId> = (0..self.beads.len() as u32)
                .map(BeadId)
                .filter(|&b| self.beads[b.0 as usize].module == module)
                .collect();
            for sym in 0..m.def.symbols.len() as u32 {
                let distinct: std::collections::HashSet<CellId> = beads_of
                    .iter()
                    .map(|b| self.beads[b.0 as usize].cells[sym as usize])
                    .collect();
                let grouped: usize = self
                    .tuples
                    .iter()
                    .filter(|s| s.module == module && s.members.contains(&sym))
                    .map(|s| {
                        beads_of
                            .iter()
                            .filter(|&&b| self.spec_covers(s, module, b))
                            .count()
                    })
                    .sum();
                let merged = grouped.saturating_sub(
                    self.tuples
                        .iter()
                        .filter(|s| {
                            s.module == module
                                && s.members.contains(&sym)
                                && beads_of.iter().any(|&b| self.spec_covers(s, module, b))
                        })
                        .count(),
                );
                if distinct.len() != beads_of.len() - merged {
                    return Err(format!(
                        "module {} sym {sym}: {} distinct cells across {} beads, {merged} merges declared",
                        m.def.name,
                        distinct.len(),
                        beads_of.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Default for Namespaces {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::ValueKind;

    fn counter_module(name: &str) -> ModuleDef {
        ModuleDef::new(name)
            .symbol("count", ValueKind::Int)
            .symbol_init("scale", ValueKind::Real, Value::Real(1.5))
    }

    #[test]
    fn register_echoes_schema() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        let syms = ns.module_symbols(m);
        assert_eq!(syms.len(), 2);
        assert_eq!(syms[0].name, "count");
        assert_eq!(syms[1].initial, Value::Real(1.5));
    }

    #[test]
    fn duplicate_module_rejected() {
        let mut ns = Namespaces::new();
        ns.register_module(counter_module("counter")).unwrap();
        assert_eq!(
            ns.register_module(counter_module("counter")),
            Err(CoreError::DuplicateModule("counter".into()))
        );
    }

    #[test]
    fn beads_get_private_cells_with_initials() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        let b1 = ns.create_bead(m, None).unwrap();
        let b2 = ns.create_bead(m, None).unwrap();
        let w1 = ns.define_weave(&[b1], None).unwrap();
        let w2 = ns.define_weave(&[b2], None).unwrap();
        let c1 = ns.resolve_named(w1, "counter", "count").unwrap();
        let c2 = ns.resolve_named(w2, "counter", "count").unwrap();
        assert_ne!(c1, c2);
        assert_eq!(ns.read_cell(c1).unwrap(), Value::Int(0));
        assert_eq!(ns.read_cell(ns.resolve_named(w1, "counter", "scale").unwrap()).unwrap(), Value::Real(1.5));
        ns.write_cell(c1, Value::Int(7)).unwrap();
        assert_eq!(ns.read_cell(c1).unwrap(), Value::Int(7));
        assert_eq!(ns.read_cell(c2).unwrap(), Value::Int(0), "b2 must not see b1's write");
    }

    #[test]
    fn shared_bead_aliases_across_weaves() {
        let mut ns = Namespaces::new();
        let counter = ns.register_module(counter_module("counter")).unwrap();
        let util = ns.register_module(counter_module("util")).unwrap();
        let shared = ns.create_bead(util, Some("shared")).unwrap();
        let b1 = ns.create_bead(counter, None).unwrap();
        let b2 = ns.create_bead(counter, None).unwrap();
        let w1 = ns.define_weave(&[b1, shared], None).unwrap();
        let w2 = ns.define_weave(&[b2, shared], None).unwrap();
        assert_eq!(
            ns.resolve_named(w1, "util", "count").unwrap(),
            ns.resolve_named(w2, "util", "count").unwrap()
        );
        assert_ne!(
            ns.resolve_named(w1, "counter", "count").unwrap(),
            ns.resolve_named(w2, "counter", "count").unwrap()
        );
    }

    #[test]
    fn weave_rejects_module_collision() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        let b1 = ns.create_bead(m, None).unwrap();
        let b2 = ns.create_bead(m, None).unwrap();
        assert_eq!(
            ns.define_weave(&[b1, b2], None),
            Err(CoreError::ModuleCollision("counter".into()))
        );
    }

    #[test]
    fn tuple_space_shares_only_members() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        // Beads 0 and 1 will share `count`; `scale` stays private.
        ns.declare_tuple_space("pool", m, &["count"], TupleGroup::Beads([0, 1].into()))
            .unwrap();
        let b0 = ns.create_bead(m, None).unwrap();
        let b1 = ns.create_bead(m, None).unwrap();
        let b2 = ns.create_bead(m, None).unwrap();
        let w0 = ns.define_weave(&[b0], None).unwrap();
        let w1 = ns.define_weave(&[b1], None).unwrap();
        let w2 = ns.define_weave(&[b2], None).unwrap();
        let count0 = ns.resolve_named(w0, "counter", "count").unwrap();
        assert_eq!(count0, ns.resolve_named(w1, "counter", "count").unwrap());
        assert_ne!(count0, ns.resolve_named(w2, "counter", "count").unwrap());
        assert_ne!(
            ns.resolve_named(w0, "counter", "scale").unwrap(),
            ns.resolve_named(w1, "counter", "scale").unwrap()
        );
        ns.write_cell(count0, Value::Int(3)).unwrap();
        assert_eq!(ns.read_cell(ns.resolve_named(w1, "counter", "count").unwrap()).unwrap(), Value::Int(3));
        ns.check_invariants().unwrap();
    }

    #[test]
    fn tuple_space_must_precede_beads() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        ns.create_bead(m, None).unwrap();
        assert_eq!(
            ns.declare_tuple_space("late", m, &["count"], TupleGroup::Beads([0, 1].into())),
            Err(CoreError::TupleAfterBead("counter".into()))
        );
        assert_eq!(
            ns.declare_tuple_space("late", m, &["count"], TupleGroup::AllBeads),
            Err(CoreError::TupleAfterBead("counter".into()))
        );
        // A group over future beads only is fine.
        ns.declare_tuple_space("ok", m, &["count"], TupleGroup::Beads([1, 2].into()))
            .unwrap();
    }

    #[test]
    fn overlapping_groups_rejected() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        ns.declare_tuple_space("a", m, &["count"], TupleGroup::Beads([0, 1].into()))
            .unwrap();
        assert_eq!(
            ns.declare_tuple_space("b", m, &["count", "scale"], TupleGroup::Beads([2, 3].into())),
            Err(CoreError::TupleOverlap { module: "counter".into(), symbol: "count".into() })
        );
    }

    #[test]
    fn resolve_costs_one_lookup() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        let b = ns.create_bead(m, None).unwrap();
        let w = ns.define_weave(&[b], None).unwrap();
        let sym = ns.symbol_index(m, "count").unwrap();
        let before = ns.resolve_lookups();
        ns.resolve(w, m, sym).unwrap();
        assert_eq!(ns.resolve_lookups(), before + 1);
        let before = ns.resolve_lookups();
        for _ in 0..100 {
            ns.resolve(w, m, sym).unwrap();
        }
        assert_eq!(ns.resolve_lookups(), before + 100);
    }

    #[test]
    fn resolve_unknown_module_and_symbol() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        let other = ns.register_module(counter_module("other")).unwrap();
        let b = ns.create_bead(m, None).unwrap();
        let w = ns.define_weave(&[b], None).unwrap();
        assert!(matches!(
            ns.resolve(w, other, 0),
            Err(CoreError::ModuleNotInWeave { .. })
        ));
        assert!(matches!(ns.resolve(w, m, 99), Err(CoreError::UnknownSymbol { .. })));
        assert!(matches!(
            ns.resolve_named(w, "counter", "missing"),
            Err(CoreError::UnknownSymbol { .. })
        ));
    }

    #[test]
    fn snapshot_roundtrip_after_undo() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        let b = ns.create_bead(m, None).unwrap();
        let w = ns.define_weave(&[b], None).unwrap();
        let snap1 = ns.snapshot(w).unwrap();
        let cell = ns.resolve_named(w, "counter", "count").unwrap();
        let old = ns.read_cell(cell).unwrap();
        ns.write_cell(cell, Value::Int(41)).unwrap();
        assert_ne!(ns.snapshot(w).unwrap(), snap1);
        ns.write_cell(cell, old).unwrap();
        assert_eq!(ns.snapshot(w).unwrap(), snap1);
    }

    #[test]
    fn write_enforces_schema() {
        let mut ns = Namespaces::new();
        let m = ns.register_module(counter_module("counter")).unwrap();
        let b = ns.create_bead(m, None).unwrap();
        let w = ns.define_weave(&[b], None).unwrap();
        let cell = ns.resolve_named(w, "counter", "count").unwrap();
        assert_eq!(
            ns.write_cell(cell, Value::Real(1.0)),
            Err(CoreError::KindMismatch { module: "counter".into(), symbol: "count".into() })
        );
    }

    #[test]
    fn generation_bumps_on_structure_only() {
        let mut ns = Namespaces::new();
        let g0 = ns.generation();
        let m = ns.register_module(counter_module("counter")).unwrap();
        assert!(ns.generation() > g0);
        let b = ns.create_bead(m, None).unwrap();
        let w = ns.define_weave(&[b], None).unwrap();
        let g1 = ns.generation();
        let cell = ns.resolve_named(w, "counter", "count").unwrap();
        ns.write_cell(cell, Value::Int(5)).unwrap();
        ns.snapshot(w).unwrap();
        assert_eq!(ns.generation(), g1, "data writes must not bump the generation");
    }
}
