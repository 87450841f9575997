//! The monitor: a line protocol for inspecting and rewiring a live
//! tapestry, served over stdio or a local unix socket.
//!
//! One request per line; every request gets exactly one response. A
//! response is a status line — `OK` or `ERR <code>` — followed by zero or
//! more payload lines and a lone `.` terminator, so it is self-delimiting:
//!
//! ```text
//! > LIST-WEAVES
//! OK
//! weave 0 w1 beads=s1,m12
//! weave 1 w2 beads=s2,m12
//! .
//! > SNAPSHOT nowhere
//! ERR unknown-weave
//! unknown weave `nowhere`
//! .
//! ```
//!
//! Query verbs (read-only; each answers from one internally consistent
//! snapshot, tagged with the tapestry generation):
//!
//! ```text
//! LIST-MODULES            module <id> <name> [reentrant]
//! LIST-BEADS              bead <id> <name> module=<module>
//! LIST-WEAVES             weave <id> <name> beads=<b1,b2,…>
//! LIST-STRINGS            string <id> <name> weave=<weave> status=<status>
//! SHOW-TAPESTRY           gen <N>, then all of the above, plus
//!                         tuple <name> module=<m> members=<s,…> group=<all|id,…>
//! SNAPSHOT <weave>        gen <N> weave=<weave>, then <module>.<symbol> = <value>
//! STATS                   gen <N>, strings=<n>, status lines, switches=<n>,
//!                         guest-calls=<n>
//! ```
//!
//! Control verbs (validated, then applied atomically at the next switch
//! boundary; the response reports the created entity or the rejection):
//!
//! ```text
//! ADD-BEAD module=<m> [name=<b>]               → bead <id> <name>
//! ADD-WEAVE beads=<b1,b2> [name=<w>]           → weave <id> <name>
//! ADD-STRING weave=<w> entry=<m.e> [name=<s>] [<arg>…]  → string <id> <name>
//! REMOVE-STRING string=<name-or-id>
//! INSERT-MODULE name=<m>     (host-registered definition, by name)
//! PAUSE / RESUME
//! ```
//!
//! String arguments use the same literals as tapestry files: `7`, `2.5`,
//! `"bytes"`, `[1.0,2.0]`. Blank lines and `#` comments are ignored. A
//! malformed line answers `ERR parse` and the session continues.

use std::fmt::Write as _;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use crate::plan::{fields, format_value, parse_value};
use crate::runtime::{RewireCommand, Runtime};
use crate::value::Value;
use crate::RtError;

pub struct Monitor {
    rt: Runtime,
}

/// Outcome of one request, before wire encoding.
struct Reply {
    status: String,
    payload: Vec<String>,
}

impl Reply {
    fn ok(payload: Vec<String>) -> Self {
        Reply { status: "OK".into(), payload }
    }

    fn err(code: &str, detail: impl Into<String>) -> Self {
        Reply { status: format!("ERR {code}"), payload: vec![detail.into()] }
    }

    fn from_rt(e: RtError) -> Self {
        Reply::err(e.code(), e.to_string())
    }

    fn encode(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.status);
        for line in &self.payload {
            let _ = writeln!(out, "{line}");
        }
        out.push_str(".\n");
        out
    }
}

impl Monitor {
    pub fn new(rt: Runtime) -> Self {
        Monitor { rt }
    }

    /// Answer one request line. Returns the full wire response (status,
    /// payload, `.` terminator), or `None` for blank/comment lines, which
    /// are not requests. Never panics on malformed input.
    pub fn handle_line(&self, line: &str) -> Option<String> {
        let f = match fields("monitor", 1, line) {
            Ok(f) => f,
            Err(e) => return Some(Reply::err("parse", e.msg).encode()),
        };
        if f.is_empty() {
            return None;
        }
        let verb = f[0].1.as_str();
        let rest = &f[1..];
        let reply = match verb {
            "LIST-MODULES" => self.list(|v, out| Self::module_lines(v, out)),
            "LIST-BEADS" => self.list(|v, out| Self::bead_lines(v, out)),
            "LIST-WEAVES" => self.list(|v, out| Self::weave_lines(v, out)),
            "LIST-STRINGS" => self.list(|v, out| Self::string_lines(v, out)),
            "SHOW-TAPESTRY" => self.list(|v, out| {
                out.push(format!("gen {}", v.generation));
                Self::module_lines(v, out);
                Self::tuple_lines(v, out);
                Self::bead_lines(v, out);
                Self::weave_lines(v, out);
                Self::string_lines(v, out);
            }),
            "SNAPSHOT" => self.snapshot(rest),
            "STATS" => self.stats(),
            "ADD-BEAD" => self.add_bead(rest),
            "ADD-WEAVE" => self.add_weave(rest),
            "ADD-STRING" => self.add_string(rest),
            "REMOVE-STRING" => self.remove_string(rest),
            "INSERT-MODULE" => self.insert_module(rest),
            "PAUSE" => self.simple(self.rt.pause()),
            "RESUME" => self.simple(self.rt.resume()),
            other => Reply::err("unknown-verb", format!("unknown verb `{other}`")),
        };
        Some(reply.encode())
    }

    /// Serve requests from `input` until EOF, writing responses to `output`.
    pub fn serve<R: BufRead, W: Write>(&self, input: R, mut output: W) -> io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if let Some(resp) = self.handle_line(&line) {
                output.write_all(resp.as_bytes())?;
                output.flush()?;
            }
        }
        Ok(())
    }

    pub fn serve_stdio(&self) -> io::Result<()> {
        let stdin = io::stdin();
        let stdout = io::stdout();
        self.serve(stdin.lock(), stdout.lock())
    }

    /// Bind a unix socket at `path` and serve clients one at a time until
    /// the runtime shuts down. A stale socket file at `path` is replaced.
    pub fn serve_unix(&self, path: &Path) -> io::Result<()> {
        use std::os::unix::net::UnixListener;
        let _ = std::fs::remove_file(path);
        let listener = UnixListener::bind(path)?;
        listener.set_nonblocking(true)?;
        loop {
            if self.rt.is_shutdown() {
                let _ = std::fs::remove_file(path);
                return Ok(());
            }
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    let reader = BufReader::new(stream.try_clone()?);
                    // One misbehaving client must not take the server down.
                    let _ = self.serve(reader, stream);
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    std::thread::sleep(std::time::Duration::from_millis(5));
                }
                Err(e) => return Err(e),
            }
        }
    }

    // --- queries -------------------------------------------------------------

    fn list(&self, fill: impl Fn(&crate::runtime::TapestryView, &mut Vec<String>)) -> Reply {
        let view = self.rt.tapestry_view();
        let mut out = Vec::new();
        fill(&view, &mut out);
        Reply::ok(out)
    }

    fn module_lines(v: &crate::runtime::TapestryView, out: &mut Vec<String>) {
        for (id, name, reentrant) in &v.modules {
            let tag = if *reentrant { " reentrant" } else { "" };
            out.push(format!("module {id} {name}{tag}"));
        }
    }

    fn tuple_lines(v: &crate::runtime::TapestryView, out: &mut Vec<String>) {
        for (name, module, members, group) in &v.tuples {
            let group = match group {
                None => "all".to_string(),
                Some(ids) => ids.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
            };
            out.push(format!(
                "tuple {name} module={module} members={} group={group}",
                members.join(","),
            ));
        }
    }

    fn bead_lines(v: &crate::runtime::TapestryView, out: &mut Vec<String>) {
        for (id, name, module) in &v.beads {
            out.push(format!("bead {id} {name} module={module}"));
        }
    }

    fn weave_lines(v: &crate::runtime::TapestryView, out: &mut Vec<String>) {
        for (id, name, beads) in &v.weaves {
            out.push(format!("weave {id} {name} beads={}", beads.join(",")));
        }
    }

    fn string_lines(v: &crate::runtime::TapestryView, out: &mut Vec<String>) {
        for (r, weave) in &v.strings {
            out.push(format!("string {} {} weave={weave} status={}", r.id, r.name, r.status));
        }
    }

    fn snapshot(&self, args: &[(usize, String)]) -> Reply {
        let [(_, weave)] = args else {
            return Reply::err("parse", "SNAPSHOT takes exactly one weave name");
        };
        match self.rt.snapshot_named(weave) {
            Ok((gen, cells)) => {
                let mut out = vec![format!("gen {gen} weave={weave}")];
                for ((module, symbol), value) in &cells {
                    out.push(format!("{module}.{symbol} = {}", format_value(value)));
                }
                Reply::ok(out)
            }
            Err(e) => Reply::from_rt(e),
        }
    }

    fn stats(&self) -> Reply {
        let view = self.rt.tapestry_view();
        let mut by_status: std::collections::BTreeMap<&str, u64> = Default::default();
        let mut switches = 0u64;
        let mut guest_calls = 0u64;
        for (r, _) in &view.strings {
            *by_status.entry(r.status.as_str()).or_default() += 1;
            switches += r.switches;
            guest_calls += r.guest_calls;
        }
        let mut out = vec![
            format!("gen {}", view.generation),
            format!("strings={}", view.strings.len()),
        ];
        for (status, n) in by_status {
            out.push(format!("status {status} {n}"));
        }
        out.push(format!("switches={switches}"));
        out.push(format!("guest-calls={guest_calls}"));
        Reply::ok(out)
    }

    // --- control -------------------------------------------------------------

    fn simple(&self, r: Result<(), RtError>) -> Reply {
        match r {
            Ok(()) => Reply::ok(Vec::new()),
            Err(e) => Reply::from_rt(e),
        }
    }

    fn add_bead(&self, args: &[(usize, String)]) -> Reply {
        let kv = match keyvals(args, &["module", "name"], &["module"]) {
            Ok(kv) => kv,
            Err(r) => return r,
        };
        let cmd = RewireCommand::AddBead {
            name: kv.get("name").unwrap_or_default(),
            module: kv.get("module").unwrap(),
        };
        match self.rt.apply_rewire(cmd) {
            Ok(crate::runtime::CmdOutcome::Bead(b)) => {
                let name = self
                    .rt
                    .tapestry_view()
                    .beads
                    .iter()
                    .find(|(id, ..)| *id == b.0)
                    .map(|(_, n, _)| n.clone())
                    .unwrap_or_default();
                Reply::ok(vec![format!("bead {b} {name}")])
            }
            Ok(_) => unreachable!(),
            Err(e) => Reply::from_rt(e),
        }
    }

    fn add_weave(&self, args: &[(usize, String)]) -> Reply {
        let kv = match keyvals(args, &["beads", "name"], &["beads"]) {
            Ok(kv) => kv,
            Err(r) => return r,
        };
        let beads: Vec<String> =
            kv.get("beads").unwrap().split(',').map(str::to_string).collect();
        let cmd = RewireCommand::AddWeave { name: kv.get("name").unwrap_or_default(), beads };
        match self.rt.apply_rewire(cmd) {
            Ok(crate::runtime::CmdOutcome::Weave(w)) => {
                let name = self
                    .rt
                    .tapestry_view()
                    .weaves
                    .iter()
                    .find(|(id, ..)| *id == w.0)
                    .map(|(_, n, _)| n.clone())
                    .unwrap_or_default();
                Reply::ok(vec![format!("weave {w} {name}")])
            }
            Ok(_) => unreachable!(),
            Err(e) => Reply::from_rt(e),
        }
    }

    fn add_string(&self, args: &[(usize, String)]) -> Reply {
        // Key=value attributes first, then positional argument literals.
        let split = args
            .iter()
            .position(|(_, a)| !a.contains('=') || a.starts_with('"') || a.starts_with('['))
            .unwrap_or(args.len());
        let kv = match keyvals(&args[..split], &["weave", "entry", "name"], &["weave", "entry"]) {
            Ok(kv) => kv,
            Err(r) => return r,
        };
        let entry = kv.get("entry").unwrap();
        let Some((module, entry)) = entry.split_once('.') else {
            return Reply::err("parse", "entry must be MODULE.ENTRY");
        };
        let mut values: Vec<Value> = Vec::new();
        for (col, tok) in &args[split..] {
            match parse_value("monitor", 1, *col, tok) {
                Ok(v) => values.push(v),
                Err(e) => return Reply::err("parse", e.msg),
            }
        }
        let cmd = RewireCommand::AddString {
            name: kv.get("name"),
            weave: kv.get("weave").unwrap(),
            module: module.to_string(),
            entry: entry.to_string(),
            args: values,
        };
        match self.rt.apply_rewire(cmd) {
            Ok(crate::runtime::CmdOutcome::String(s)) => {
                let name = self
                    .rt
                    .tapestry_view()
                    .strings
                    .iter()
                    .find(|(r, _)| r.id == s.0)
                    .map(|(r, _)| r.name.clone())
                    .unwrap_or_default();
                Reply::ok(vec![format!("string {s} {name}")])
            }
            Ok(_) => unreachable!(),
            Err(e) => Reply::from_rt(e),
        }
    }

    fn remove_string(&self, args: &[(usize, String)]) -> Reply {
        let kv = match keyvals(args, &["string"], &["string"]) {
            Ok(kv) => kv,
            Err(r) => return r,
        };
        let who = kv.get("string").unwrap();
        let id = match who.parse::<u32>() {
            Ok(n) => n,
            Err(_) => match self.rt.string_id(&who) {
                Ok(s) => s.0,
                Err(e) => return Reply::from_rt(e),
            },
        };
        match self.rt.apply_rewire(RewireCommand::RemoveString { id }) {
            Ok(_) => Reply::ok(vec![format!("string {id} removed")]),
            Err(e) => Reply::from_rt(e),
        }
    }

    fn insert_module(&self, args: &[(usize, String)]) -> Reply {
        let kv = match keyvals(args, &["name"], &["name"]) {
            Ok(kv) => kv,
            Err(r) => return r,
        };
        match self.rt.insert_module(&kv.get("name").unwrap()) {
            Ok(m) => Reply::ok(vec![format!("module {m}")]),
            Err(e) => Reply::from_rt(e),
        }
    }
}

struct KeyVals(std::collections::BTreeMap<String, String>);

impl KeyVals {
    fn get(&self, key: &str) -> Option<String> {
        self.0.get(key).cloned()
    }
}

/// Parse `key=value` attributes, rejecting unknown keys, duplicates, and
/// missing required keys with `ERR parse`.
fn keyvals(
    args: &[(usize, String)],
    allowed: &[&str],
    required: &[&str],
) -> Result<KeyVals, Reply> {
    let mut map = std::collections::BTreeMap::new();
    for (_, arg) in args {
        let Some((key, value)) = arg.split_once('=') else {
            return Err(Reply::err("parse", format!("expected key=value, got `{arg}`")));
        };
        if !allowed.contains(&key) {
            return Err(Reply::err("parse", format!("unknown attribute `{key}`")));
        }
        if value.is_empty() {
            return Err(Reply::err("parse", format!("attribute `{key}` is empty")));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Reply::err("parse", format!("attribute `{key}` given twice")));
        }
    }
    for key in required {
        if !map.contains_key(*key) {
            return Err(Reply::err("parse", format!("missing attribute `{key}=`")));
        }
    }
    Ok(KeyVals(map))
}
