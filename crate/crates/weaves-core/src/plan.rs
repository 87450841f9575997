//! The tapestry file format: a line-oriented declarative description of a
//! composition, plus the loader that turns one into a live runtime.
//!
//! ```text
//! # comments run to end of line
//! module solver
//! module mediator
//!
//! tuple shared mediator members=iface,visits          # painted by beads
//! tuple wide solver members=grid group=all            # every solver bead
//!
//! bead s1 solver
//! bead m12 mediator spaces=shared
//!
//! weave w1 s1,m12
//!
//! string S1 w1 solver.main 0 0.5 "label" [1.0,2.0]
//!
//! fabric S1,S2
//! ```
//!
//! Every name must be declared before it is referenced. Sections may be
//! interleaved in a file; serialization is canonical (sections grouped in
//! the order above), and `parse(serialize(p))` is structurally `p`.
//!
//! Code never appears in a file: modules are referenced by name and must be
//! registered with the hosting process (a [`ModuleLibrary`]) before
//! [`instantiate`] is called.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::module::ModuleLibrary;
use crate::namespace::TupleGroup;
use crate::runtime::Runtime;
use crate::value::Value;
use crate::RtError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TapestryPlan {
    pub modules: Vec<String>,
    pub tuples: Vec<TupleDecl>,
    pub beads: Vec<BeadDecl>,
    pub weaves: Vec<WeaveDecl>,
    pub strings: Vec<StringDecl>,
    pub fabric: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleDecl {
    pub name: String,
    pub module: String,
    pub members: Vec<String>,
    /// `true`: every bead of the module joins. `false`: beads opt in via
    /// their `spaces=` attribute.
    pub all: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeadDecl {
    pub name: String,
    pub module: String,
    pub spaces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeaveDecl {
    pub name: String,
    pub beads: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StringDecl {
    pub name: String,
    pub weave: String,
    pub module: String,
    pub entry: String,
    pub args: Vec<Value>,
}

/// A parse diagnostic: `file:line:col: message`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanError {
    pub file: String,
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.file, self.line, self.col, self.msg)
    }
}

impl std::error::Error for PlanError {}

fn err(file: &str, line: usize, col: usize, msg: impl Into<String>) -> PlanError {
    PlanError { file: file.to_string(), line, col, msg: msg.into() }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Split a line into fields: whitespace-separated, except that `"…"` and
/// `[…]` fields run to their closers. Returns (column, field) pairs.
/// Shared with the monitor protocol, which uses the same lexical shape.
pub(crate) fn fields(
    file: &str,
    line_no: usize,
    line: &str,
) -> Result<Vec<(usize, String)>, PlanError> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        if chars[i] == '#' {
            break;
        }
        let start = i;
        let mut field = String::new();
        if chars[i] == '"' {
            field.push('"');
            i += 1;
            loop {
                if i >= chars.len() {
                    return Err(err(file, line_no, start + 1, "unterminated string literal"));
                }
                field.push(chars[i]);
                if chars[i] == '\\' {
                    i += 1;
                    if i >= chars.len() {
                        return Err(err(file, line_no, start + 1, "unterminated escape"));
                    }
                    field.push(chars[i]);
                    i += 1;
                    continue;
                }
                if chars[i] == '"' {
                    i += 1;
                    break;
                }
                i += 1;
            }
        } else if chars[i] == '[' {
            loop {
                if i >= chars.len() {
                    return Err(err(file, line_no, start + 1, "unterminated array literal"));
                }
                field.push(chars[i]);
                if chars[i] == ']' {
                    i += 1;
                    break;
                }
                i += 1;
            }
        } else {
            while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '#' {
                field.push(chars[i]);
                i += 1;
            }
        }
        out.push((start + 1, field));
    }
    Ok(out)
}

pub(crate) fn parse_value(file: &str, line: usize, col: usize, tok: &str) -> Result<Value, PlanError> {
    if let Some(body) = tok.strip_prefix('"') {
        let body = body
            .strip_suffix('"')
            .ok_or_else(|| err(file, line, col, "unterminated string literal"))?;
        let mut bytes = Vec::new();
        let mut chars = body.chars().peekable();
        while let Some(c) = chars.next() {
            if c != '\\' {
                let mut buf = [0u8; 4];
                bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                continue;
            }
            match chars.next() {
                Some('\\') => bytes.push(b'\\'),
                Some('"') => bytes.push(b'"'),
                Some('n') => bytes.push(b'\n'),
                Some('t') => bytes.push(b'\t'),
                Some('r') => bytes.push(b'\r'),
                Some('x') => {
                    let hi = chars.next();
                    let lo = chars.next();
                    let (Some(hi), Some(lo)) = (hi, lo) else {
                        return Err(err(file, line, col, "truncated \\x escape"));
                    };
                    let v = u8::from_str_radix(&format!("{hi}{lo}"), 16)
                        .map_err(|_| err(file, line, col, "invalid \\x escape"))?;
                    bytes.push(v);
                }
                other => {
                    return Err(err(file, line, col, format!("unknown escape {other:?}")));
                }
            }
        }
        return Ok(Value::Bytes(bytes));
    }
    if let Some(body) = tok.strip_prefix('[') {
        let body = body
            .strip_suffix(']')
            .ok_or_else(|| err(file, line, col, "unterminated array literal"))?;
        let mut vals = Vec::new();
        for part in body.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let v: f64 = part
                .parse()
                .map_err(|_| err(file, line, col, format!("bad real `{part}` in array")))?;
            if !v.is_finite() {
                return Err(err(file, line, col, "non-finite real in array"));
            }
            vals.push(v);
        }
        return Ok(Value::RealArray(vals));
    }
    if tok.contains('.') || tok.contains('e') || tok.contains('E') {
        let v: f64 =
            tok.parse().map_err(|_| err(file, line, col, format!("bad real literal `{tok}`")))?;
        if !v.is_finite() {
            return Err(err(file, line, col, "non-finite real literal"));
        }
        return Ok(Value::Real(v));
    }
    let v: i64 =
        tok.parse().map_err(|_| err(file, line, col, format!("bad literal `{tok}`")))?;
    Ok(Value::Int(v))
}

pub(crate) fn format_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Real(r) => format!("{r:?}"),
        Value::Bytes(b) => {
            let mut out = String::from("\"");
            for &byte in b {
                match byte {
                    b'\\' => out.push_str("\\\\"),
                    b'"' => out.push_str("\\\""),
                    b'\n' => out.push_str("\\n"),
                    b'\t' => out.push_str("\\t"),
                    b'\r' => out.push_str("\\r"),
                    0x20..=0x7e => out.push(byte as char),
                    other => out.push_str(&format!("\\x{other:02x}")),
                }
            }
            out.push('"');
            out
        }
        Value::RealArray(xs) => {
            let parts: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", parts.join(","))
        }
    }
}

/// Comma-separated identifier list (the `a,b,c` in attributes and weaves).
fn ident_list(file: &str, line: usize, col: usize, s: &str) -> Result<Vec<String>, PlanError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        if !is_ident(part) {
            return Err(err(file, line, col, format!("`{part}` is not a valid name")));
        }
        out.push(part.to_string());
    }
    Ok(out)
}

pub fn parse_tapestry(text: &str, file: &str) -> Result<TapestryPlan, PlanError> {
    let mut plan = TapestryPlan::default();
    // Declared names, tracked in file order to enforce declare-before-use.
    let mut modules: BTreeSet<String> = BTreeSet::new();
    let mut tuples: BTreeMap<String, String> = BTreeMap::new(); // name -> module
    let mut beads: BTreeMap<String, String> = BTreeMap::new(); // name -> module
    let mut weaves: BTreeSet<String> = BTreeSet::new();
    let mut strings: BTreeSet<String> = BTreeSet::new();

    for (ix, raw) in text.lines().enumerate() {
        let line_no = ix + 1;
        let f = fields(file, line_no, raw)?;
        if f.is_empty() {
            continue;
        }
        let (kw_col, kw) = (&f[0].0, f[0].1.as_str());
        let need = |n: usize, what: &str| -> Result<(), PlanError> {
            if f.len() < n {
                Err(err(file, line_no, *kw_col, format!("`{kw}` needs {what}")))
            } else {
                Ok(())
            }
        };
        match kw {
            "module" => {
                need(2, "a name: module NAME")?;
                let (col, name) = (&f[1].0, &f[1].1);
                if !is_ident(name) {
                    return Err(err(file, line_no, *col, format!("`{name}` is not a valid name")));
                }
                if !modules.insert(name.clone()) {
                    return Err(err(file, line_no, *col, format!("duplicate module `{name}`")));
                }
                plan.modules.push(name.clone());
            }
            "tuple" => {
                need(4, "a name, a module, and members=…: tuple NAME MODULE members=a,b [group=all]")?;
                let (ncol, name) = (&f[1].0, &f[1].1);
                let (mcol, module) = (&f[2].0, &f[2].1);
                if !is_ident(name) {
                    return Err(err(file, line_no, *ncol, format!("`{name}` is not a valid name")));
                }
                if !modules.contains(module) {
                    return Err(err(file, line_no, *mcol, format!("unknown module `{module}`")));
                }
                if beads.values().any(|m| m == module) {
                    return Err(err(
                        file,
                        line_no,
                        *ncol,
                        format!("tuple spaces for `{module}` must be declared before its beads"),
                    ));
                }
                let mut members = None;
                let mut all = false;
                for (col, attr) in &f[3..] {
                    if let Some(list) = attr.strip_prefix("members=") {
                        members = Some(ident_list(file, line_no, *col, list)?);
                    } else if attr == "group=all" {
                        all = true;
                    } else {
                        return Err(err(file, line_no, *col, format!("unknown attribute `{attr}`")));
                    }
                }
                let members = members
                    .ok_or_else(|| err(file, line_no, *kw_col, "tuple needs members=a,b"))?;
                if tuples.insert(name.clone(), module.clone()).is_some() {
                    return Err(err(file, line_no, *ncol, format!("duplicate tuple `{name}`")));
                }
                plan.tuples.push(TupleDecl {
                    name: name.clone(),
                    module: module.clone(),
                    members,
                    all,
                });
            }
            "bead" => {
                need(3, "a name and a module: bead NAME MODULE [spaces=t1,t2]")?;
                let (ncol, name) = (&f[1].0, &f[1].1);
                let (mcol, module) = (&f[2].0, &f[2].1);
                if !is_ident(name) {
                    return Err(err(file, line_no, *ncol, format!("`{name}` is not a valid name")));
                }
                if !modules.contains(module) {
                    return Err(err(file, line_no, *mcol, format!("unknown module `{module}`")));
                }
                let mut spaces = Vec::new();
                for (col, attr) in &f[3..] {
                    let Some(list) = attr.strip_prefix("spaces=") else {
                        return Err(err(file, line_no, *col, format!("unknown attribute `{attr}`")));
                    };
                    for t in ident_list(file, line_no, *col, list)? {
                        match tuples.get(&t) {
                            None => {
                                return Err(err(file, line_no, *col, format!("unknown tuple `{t}`")))
                            }
                            Some(m) if m != module => {
                                return Err(err(
                                    file,
                                    line_no,
                                    *col,
                                    format!("tuple `{t}` belongs to module `{m}`, not `{module}`"),
                                ));
                            }
                            Some(_) => spaces.push(t),
                        }
                    }
                }
                if beads.insert(name.clone(), module.clone()).is_some() {
                    return Err(err(file, line_no, *ncol, format!("duplicate bead `{name}`")));
                }
                plan.beads.push(BeadDecl { name: name.clone(), module: module.clone(), spaces });
            }
            "weave" => {
                need(3, "a name and beads: weave NAME B1,B2")?;
                let (ncol, name) = (&f[1].0, &f[1].1);
                let (bcol, list) = (&f[2].0, &f[2].1);
                if !is_ident(name) {
                    return Err(err(file, line_no, *ncol, format!("`{name}` is not a valid name")));
                }
                let mut seen_modules = BTreeSet::new();
                let bead_names = ident_list(file, line_no, *bcol, list)?;
                for b in &bead_names {
                    let Some(m) = beads.get(b) else {
                        return Err(err(file, line_no, *bcol, format!("unknown bead `{b}`")));
                    };
                    if !seen_modules.insert(m.clone()) {
                        return Err(err(
                            file,
                            line_no,
                            *bcol,
                            format!("weave `{name}` holds two beads of module `{m}`"),
                        ));
                    }
                }
                if !weaves.insert(name.clone()) {
                    return Err(err(file, line_no, *ncol, format!("duplicate weave `{name}`")));
                }
                plan.weaves.push(WeaveDecl { name: name.clone(), beads: bead_names });
            }
            "string" => {
                need(4, "a name, a weave, and an entry: string NAME WEAVE MOD.ENTRY [args…]")?;
                let (ncol, name) = (&f[1].0, &f[1].1);
                let (wcol, weave) = (&f[2].0, &f[2].1);
                let (ecol, target) = (&f[3].0, &f[3].1);
                if !is_ident(name) {
                    return Err(err(file, line_no, *ncol, format!("`{name}` is not a valid name")));
                }
                if !weaves.contains(weave) {
                    return Err(err(file, line_no, *wcol, format!("unknown weave `{weave}`")));
                }
                let Some((module, entry)) = target.split_once('.') else {
                    return Err(err(file, line_no, *ecol, "entry must be MODULE.ENTRY"));
                };
                if !modules.contains(module) {
                    return Err(err(file, line_no, *ecol, format!("unknown module `{module}`")));
                }
                if !is_ident(entry) {
                    return Err(err(file, line_no, *ecol, format!("`{entry}` is not a valid name")));
                }
                let mut args = Vec::new();
                for (col, tok) in &f[4..] {
                    args.push(parse_value(file, line_no, *col, tok)?);
                }
                if !strings.insert(name.clone()) {
                    return Err(err(file, line_no, *ncol, format!("duplicate string `{name}`")));
                }
                plan.strings.push(StringDecl {
                    name: name.clone(),
                    weave: weave.clone(),
                    module: module.to_string(),
                    entry: entry.to_string(),
                    args,
                });
            }
            "fabric" => {
                need(2, "a string list: fabric S1,S2")?;
                if plan.fabric.is_some() {
                    return Err(err(file, line_no, *kw_col, "fabric declared twice"));
                }
                let (col, list) = (&f[1].0, &f[1].1);
                let names = ident_list(file, line_no, *col, list)?;
                let mut seen = BTreeSet::new();
                for s in &names {
                    if !strings.contains(s) {
                        return Err(err(file, line_no, *col, format!("unknown string `{s}`")));
                    }
                    if !seen.insert(s.clone()) {
                        return Err(err(file, line_no, *col, format!("string `{s}` bound twice")));
                    }
                }
                plan.fabric = Some(names);
            }
            other => {
                return Err(err(file, line_no, *kw_col, format!("unknown declaration `{other}`")));
            }
        }
    }
    Ok(plan)
}

/// Canonical form: sections in a fixed order, one declaration per line.
pub fn serialize_tapestry(plan: &TapestryPlan) -> String {
    let mut sections: Vec<String> = Vec::new();
    if !plan.modules.is_empty() {
        sections
            .push(plan.modules.iter().map(|m| format!("module {m}\n")).collect::<String>());
    }
    if !plan.tuples.is_empty() {
        sections.push(
            plan.tuples
                .iter()
                .map(|t| {
                    let group = if t.all { " group=all" } else { "" };
                    format!("tuple {} {} members={}{group}\n", t.name, t.module, t.members.join(","))
                })
                .collect::<String>(),
        );
    }
    if !plan.beads.is_empty() {
        sections.push(
            plan.beads
                .iter()
                .map(|b| {
                    if b.spaces.is_empty() {
                        format!("bead {} {}\n", b.name, b.module)
                    } else {
                        format!("bead {} {} spaces={}\n", b.name, b.module, b.spaces.join(","))
                    }
                })
                .collect::<String>(),
        );
    }
    if !plan.weaves.is_empty() {
        sections.push(
            plan.weaves
                .iter()
                .map(|w| format!("weave {} {}\n", w.name, w.beads.join(",")))
                .collect::<String>(),
        );
    }
    if !plan.strings.is_empty() {
        sections.push(
            plan.strings
                .iter()
                .map(|s| {
                    let mut line = format!("string {} {} {}.{}", s.name, s.weave, s.module, s.entry);
                    for a in &s.args {
                        line.push(' ');
                        line.push_str(&format_value(a));
                    }
                    line.push('\n');
                    line
                })
                .collect::<String>(),
        );
    }
    if let Some(fab) = &plan.fabric {
        sections.push(format!("fabric {}\n", fab.join(",")));
    }
    sections.join("\n")
}

/// Replace every argument equal to the bytes `$seed` with `Int(seed)`.
/// A plan that mentions `$seed` requires one; passing a seed to a plan that
/// never mentions it is fine.
pub fn substitute_seed(plan: &mut TapestryPlan, seed: Option<u64>) -> Result<(), RtError> {
    let marker = b"$seed";
    let wants = plan
        .strings
        .iter()
        .flat_map(|s| s.args.iter())
        .any(|a| matches!(a, Value::Bytes(b) if b == marker));
    if !wants {
        return Ok(());
    }
    let Some(seed) = seed else {
        return Err(RtError::Guest("plan uses $seed but no --seed was given".into()));
    };
    for s in &mut plan.strings {
        for a in &mut s.args {
            if matches!(a, Value::Bytes(b) if b == marker) {
                *a = Value::Int(seed as i64);
            }
        }
    }
    Ok(())
}

/// Build a fresh runtime from a plan. Every module the plan names must be
/// present in `library`. Validation happens before any construction, so an
/// error never leaves a half-built tapestry in the caller's hands.
pub fn instantiate(plan: &TapestryPlan, library: &ModuleLibrary) -> Result<Runtime, RtError> {
    for m in &plan.modules {
        if library.get(m).is_none() {
            return Err(RtError::Guest(format!("module `{m}` is not registered with this host")));
        }
    }
    for s in &plan.strings {
        let def = library
            .get(&s.module)
            .ok_or_else(|| RtError::Guest(format!("module `{}` is not registered", s.module)))?;
        if !def.entries.contains_key(&s.entry) {
            return Err(RtError::Guest(format!(
                "module `{}` has no entry `{}`",
                s.module, s.entry
            )));
        }
    }

    // The runtime keeps the whole library so INSERT-MODULE can later pull
    // definitions the plan itself never named.
    let rt = Runtime::with_library(library.clone());
    let mut module_ids = BTreeMap::new();
    for m in &plan.modules {
        let id = rt.insert_module(m)?;
        module_ids.insert(m.clone(), id);
    }
    // Painted groups name bead ids; in a fresh runtime those are exactly the
    // declaration positions.
    for t in &plan.tuples {
        let members: Vec<&str> = t.members.iter().map(String::as_str).collect();
        let group = if t.all {
            TupleGroup::AllBeads
        } else {
            let ids: BTreeSet<u32> = plan
                .beads
                .iter()
                .enumerate()
                .filter(|(_, b)| b.spaces.contains(&t.name))
                .map(|(i, _)| i as u32)
                .collect();
            TupleGroup::Beads(ids)
        };
        rt.declare_tuple_space(&t.name, module_ids[&t.module], &members, group)?;
    }
    for b in &plan.beads {
        rt.create_bead(module_ids[&b.module], Some(&b.name))?;
    }
    for w in &plan.weaves {
        let beads: Vec<crate::namespace::BeadId> =
            w.beads.iter().map(|b| rt.bead_id(b)).collect::<Result<_, _>>()?;
        rt.define_weave(&beads, Some(&w.name))?;
    }
    let mut string_ids = BTreeMap::new();
    for s in &plan.strings {
        let w = rt.weave_id(&s.weave)?;
        let id = rt.spawn_string(w, &s.module, &s.entry, s.args.clone(), Some(&s.name))?;
        string_ids.insert(s.name.clone(), id);
    }
    if let Some(fab) = &plan.fabric {
        let endpoints: Vec<crate::runtime::StringId> =
            fab.iter().map(|s| string_ids[s]).collect();
        rt.fabric_init(&endpoints)?;
    }
    Ok(rt)
}
