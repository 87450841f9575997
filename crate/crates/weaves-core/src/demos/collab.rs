//! Collaborating solvers: two strings, each solving a two-point
//! boundary-value problem `u'' = f` on its half of `[0, 1]`, coupled only
//! through a mediator bead both weaves share. The mediator relaxes the
//! interface value until the one-sided derivatives match, which is the
//! continuity condition the decomposition must restore.
//!
//! The numerical pieces:
//!
//! * each subdomain solve is a direct tridiagonal (Thomas) solve of the
//!   second-order central-difference system, with the mediator's current
//!   interface value as one boundary;
//! * derivatives at the interface use one-sided second-order stencils,
//!   `(3u_n − 4u_{n−1} + u_{n−2}) / 2h` and its mirror;
//! * the mediator's update is `γ ← γ + θ·(d_r − d_l)/K` with
//!   `K = 1/ξ + 1/(1−ξ)`. `K` is the exact sensitivity of the derivative
//!   mismatch to γ (the homogeneous discrete solutions are linear in x), so
//!   θ = 1 lands on the fixed point in one step and θ ∈ (0,1) contracts the
//!   interface error by 1−θ per round.
//!
//! Both solvers run the same entry; nothing in the guest code distinguishes
//! "left" from "right" except an argument. All coordination state lives in
//! mediator cells, so the protocol works unchanged under preemption: the
//! scheduler's shared-bead rule makes each `update` call atomic with
//! respect to the other solver.

use crate::demos::{decode_f64s, encode_f64s};
use crate::report::RunReport;
use crate::runtime::{Ctx, Runtime, SchedulerPolicy};
use crate::value::{Value, ValueKind};
use crate::{ModuleDef, RtError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forcing {
    /// f = −2; solution x(1 − x) under zero boundaries.
    ConstNeg2,
    /// f = 6x; solution x³ − x under zero boundaries.
    PolySixX,
    /// f = −π² sin(πx); solution sin(πx) under zero boundaries.
    SinePi,
}

impl Forcing {
    pub const ALL: [Forcing; 3] = [Forcing::ConstNeg2, Forcing::PolySixX, Forcing::SinePi];

    pub fn name(self) -> &'static str {
        match self {
            Forcing::ConstNeg2 => "const-neg2",
            Forcing::PolySixX => "poly-6x",
            Forcing::SinePi => "sine-pi",
        }
    }

    pub fn from_name(name: &str) -> Option<Forcing> {
        Forcing::ALL.into_iter().find(|f| f.name() == name)
    }

    fn id(self) -> i64 {
        match self {
            Forcing::ConstNeg2 => 0,
            Forcing::PolySixX => 1,
            Forcing::SinePi => 2,
        }
    }

    fn from_id(id: i64) -> Option<Forcing> {
        Forcing::ALL.into_iter().find(|f| f.id() == id)
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Forcing::ConstNeg2 => -2.0,
            Forcing::PolySixX => 6.0 * x,
            Forcing::SinePi => -(std::f64::consts::PI.powi(2)) * (std::f64::consts::PI * x).sin(),
        }
    }

    /// Exact solution under zero boundary values.
    pub fn analytic(self, x: f64) -> f64 {
        match self {
            Forcing::ConstNeg2 => x * (1.0 - x),
            Forcing::PolySixX => x.powi(3) - x,
            Forcing::SinePi => (std::f64::consts::PI * x).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CollabProblem {
    pub forcing: Forcing,
    /// Mesh intervals over [0, 1]; nodes are 0..=n at spacing h = 1/n.
    pub n: usize,
    /// Interface node index; both subdomains need at least two intervals.
    pub xi_index: usize,
    /// Boundary values u(0), u(1).
    pub bc: (f64, f64),
    /// Relaxation factor in (0, 1].
    pub theta: f64,
    /// Stop when successive interface values differ by less than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for CollabProblem {
    fn default() -> Self {
        CollabProblem {
            forcing: Forcing::ConstNeg2,
            n: 512,
            xi_index: 256,
            bc: (0.0, 0.0),
            theta: 0.8,
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

impl CollabProblem {
    pub fn with_forcing(forcing: Forcing) -> Self {
        CollabProblem { forcing, ..Default::default() }
    }

    fn validate(&self) -> Result<(), RtError> {
        let ok = self.n >= 4
            && self.xi_index >= 2
            && self.xi_index + 2 <= self.n
            && self.theta > 0.0
            && self.theta <= 1.0
            && self.tol > 0.0
            && self.max_iters >= 1;
        if ok {
            Ok(())
        } else {
            Err(RtError::Guest(format!(
                "invalid problem: n={} xi_index={} theta={} tol={} max_iters={}",
                self.n, self.xi_index, self.theta, self.tol, self.max_iters
            )))
        }
    }

    fn string_args(&self, side: i64) -> Vec<Value> {
        vec![
            Value::Int(side),
            Value::Int(self.n as i64),
            Value::Int(self.xi_index as i64),
            Value::Int(self.forcing.id()),
            Value::Real(self.bc.0),
            Value::Real(self.bc.1),
            Value::Real(self.theta),
            Value::Real(self.tol),
            Value::Int(self.max_iters as i64),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct CollabReport {
    /// Assembled solution at all n+1 mesh nodes.
    pub u: Vec<f64>,
    /// Final interface value.
    pub gamma: f64,
    /// Mediator updates performed.
    pub iters: usize,
    pub converged: bool,
    /// Interface value after each update, starting with the initial guess.
    pub history: Vec<f64>,
    pub run: RunReport,
}

/// Direct solve of `u'' = f` on global nodes `lo..=hi` with the given
/// boundary values; returns all hi−lo+1 node values.
fn solve_segment(forcing: Forcing, h: f64, lo: usize, hi: usize, u_lo: f64, u_hi: f64) -> Vec<f64> {
    let m = hi - lo + 1;
    let interior = m - 2;
    let mut u = vec![0.0; m];
    u[0] = u_lo;
    u[m - 1] = u_hi;
    if interior == 0 {
        return u;
    }
    // Tridiagonal system: u_{j−1} − 2u_j + u_{j+1} = h²·f(x_j).
    let mut rhs: Vec<f64> = (1..=interior)
        .map(|j| h * h * forcing.eval((lo + j) as f64 * h))
        .collect();
    rhs[0] -= u_lo;
    rhs[interior - 1] -= u_hi;
    // Thomas elimination with constant coefficients (diag −2, off-diag 1).
    let mut diag = vec![-2.0; interior];
    for j in 1..interior {
        let w = 1.0 / diag[j - 1];
        diag[j] -= w;
        rhs[j] -= w * rhs[j - 1];
    }
    u[interior] = rhs[interior - 1] / diag[interior - 1];
    for j in (1..interior).rev() {
        u[j] = (rhs[j - 1] - u[j + 1]) / diag[j - 1];
    }
    u
}

/// Single-domain reference: one tridiagonal solve over the full mesh.
pub fn monolithic(problem: &CollabProblem) -> Vec<f64> {
    solve_segment(problem.forcing, 1.0 / problem.n as f64, 0, problem.n, problem.bc.0, problem.bc.1)
}

/// Interface derivative from the subdomain that *ends* at the interface:
/// one-sided, second order, using the last three node values.
fn derivative_from_left(u: &[f64], h: f64) -> f64 {
    let m = u.len();
    (3.0 * u[m - 1] - 4.0 * u[m - 2] + u[m - 3]) / (2.0 * h)
}

/// Mirror stencil for the subdomain that *starts* at the interface.
fn derivative_from_right(u: &[f64], h: f64) -> f64 {
    (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
}

pub fn solver_module() -> ModuleDef {
    ModuleDef::new("solver")
        .symbol("u", ValueKind::Bytes)
        .entry("main", |ctx| solver_main(ctx))
}

fn solver_main(ctx: &Ctx) -> Result<(), RtError> {
    let side = ctx.arg_int(0)?;
    let n = ctx.arg_int(1)? as usize;
    let xi_index = ctx.arg_int(2)? as usize;
    let forcing = Forcing::from_id(ctx.arg_int(3)?)
        .ok_or_else(|| RtError::Guest("unknown forcing id".into()))?;
    let bc = (ctx.arg_real(4)?, ctx.arg_real(5)?);
    let theta = ctx.arg_real(6)?;
    let tol = ctx.arg_real(7)?;
    let max_iters = ctx.arg_int(8)?;
    let h = 1.0 / n as f64;
    let xi = xi_index as f64 * h;
    let (lo, hi) = if side == 0 { (0, xi_index) } else { (xi_index, n) };

    // Both solvers write the same configuration derived from the same
    // arguments, so initialization is idempotent and order-free. The first
    // update cannot fire before both sides have offered a derivative, hence
    // before both have finished configuring.
    ctx.set_in("mediator", "gamma", Value::Real(0.5 * (bc.0 + bc.1)))?;
    ctx.set_in("mediator", "theta", Value::Real(theta))?;
    ctx.set_in("mediator", "tol", Value::Real(tol))?;
    ctx.set_in("mediator", "max_updates", Value::Int(max_iters))?;
    ctx.set_in("mediator", "k_norm", Value::Real(1.0 / xi + 1.0 / (1.0 - xi)))?;

    let mut my_round: i64 = 0;
    loop {
        let gamma = ctx
            .get_in("mediator", "gamma")?
            .as_real()
            .expect("gamma is a real cell");
        let (u_lo, u_hi) = if side == 0 { (bc.0, gamma) } else { (gamma, bc.1) };
        let u = solve_segment(forcing, h, lo, hi, u_lo, u_hi);
        let d = if side == 0 { derivative_from_left(&u, h) } else { derivative_from_right(&u, h) };
        ctx.set("u", Value::Bytes(encode_f64s(&u)))?;

        if ctx.get_in("mediator", "done")?.as_int() == Some(1) {
            // Converged (or gave up) while we were solving; the solve above
            // already used the final interface value.
            return Ok(());
        }
        if side == 0 {
            ctx.set_in("mediator", "d_left", Value::Real(d))?;
            ctx.set_in("mediator", "have_left", Value::Int(1))?;
        } else {
            ctx.set_in("mediator", "d_right", Value::Real(d))?;
            ctx.set_in("mediator", "have_right", Value::Int(1))?;
        }
        ctx.call("mediator", "update")?;

        // Wait — at solver level, never inside the shared frame — for the
        // round to advance or the relaxation to finish.
        loop {
            let round = ctx.get_in("mediator", "round")?.as_int().unwrap_or(0);
            let done = ctx.get_in("mediator", "done")?.as_int() == Some(1);
            if done || round > my_round {
                my_round = round;
                break;
            }
            ctx.yield_now()?;
        }
    }
}

pub fn mediator_module() -> ModuleDef {
    ModuleDef::new("mediator")
        .symbol("gamma", ValueKind::Real)
        .symbol("d_left", ValueKind::Real)
        .symbol("d_right", ValueKind::Real)
        .symbol("have_left", ValueKind::Int)
        .symbol("have_right", ValueKind::Int)
        .symbol("round", ValueKind::Int)
        .symbol("updates", ValueKind::Int)
        .symbol("done", ValueKind::Int)
        .symbol("converged", ValueKind::Int)
        .symbol("theta", ValueKind::Real)
        .symbol("tol", ValueKind::Real)
        .symbol("max_updates", ValueKind::Int)
        .symbol("k_norm", ValueKind::Real)
        .symbol("history", ValueKind::Bytes)
        .entry("update", |ctx| mediator_update(ctx))
}

fn mediator_update(ctx: &Ctx) -> Result<(), RtError> {
    if ctx.get_int("done")? == 1 {
        return Ok(());
    }
    if ctx.get_int("have_left")? == 0 || ctx.get_int("have_right")? == 0 {
        // The partner has not offered this round's derivative yet; the
        // caller parks at solver level and the partner's call will relax.
        return Ok(());
    }
    let gamma = ctx.get_real("gamma")?;
    let mismatch = ctx.get_real("d_right")? - ctx.get_real("d_left")?;
    let delta = ctx.get_real("theta")? * mismatch / ctx.get_real("k_norm")?;
    let next = gamma + delta;
    ctx.set("gamma", Value::Real(next))?;
    ctx.set("have_left", Value::Int(0))?;
    ctx.set("have_right", Value::Int(0))?;
    let updates = ctx.get_int("updates")? + 1;
    ctx.set("updates", Value::Int(updates))?;
    let mut history = decode_f64s(ctx.get("history")?.as_bytes().unwrap_or(&[]));
    if history.is_empty() {
        history.push(gamma);
    }
    history.push(next);
    ctx.set("history", Value::Bytes(encode_f64s(&history)))?;
    if delta.abs() < ctx.get_real("tol")? {
        ctx.set("done", Value::Int(1))?;
        ctx.set("converged", Value::Int(1))?;
    } else if updates >= ctx.get_int("max_updates")? {
        ctx.set("done", Value::Int(1))?;
    }
    ctx.set("round", Value::Int(ctx.get_int("round")? + 1))?;
    Ok(())
}

/// The canonical two-solver/one-mediator tapestry: beads s1, s2, m; weaves
/// ⟨s1, m⟩ and ⟨s2, m⟩; one string per weave. Returns the runtime plus the
/// weave ids (left, right).
pub fn build_tapestry(
    rt: &Runtime,
    problem: &CollabProblem,
    tag: &str,
    reversed_spawn: bool,
) -> Result<(crate::WeaveId, crate::WeaveId), RtError> {
    let solver = rt.module_id("solver").or_else(|_| rt.register_module(solver_module()))?;
    let mediator = rt.module_id("mediator").or_else(|_| rt.register_module(mediator_module()))?;
    let s1 = rt.create_bead(solver, Some(&format!("s1{tag}")))?;
    let s2 = rt.create_bead(solver, Some(&format!("s2{tag}")))?;
    let m = rt.create_bead(mediator, Some(&format!("m{tag}")))?;
    let w1 = rt.define_weave(&[s1, m], Some(&format!("w1{tag}")))?;
    let w2 = rt.define_weave(&[s2, m], Some(&format!("w2{tag}")))?;
    let spawn = |weave, side: i64, name: &str| {
        rt.spawn_string(weave, "solver", "main", problem.string_args(side), Some(name))
    };
    if reversed_spawn {
        spawn(w2, 1, &format!("R{tag}"))?;
        spawn(w1, 0, &format!("L{tag}"))?;
    } else {
        spawn(w1, 0, &format!("L{tag}"))?;
        spawn(w2, 1, &format!("R{tag}"))?;
    }
    Ok((w1, w2))
}

fn collect(rt: &Runtime, problem: &CollabProblem, w1: crate::WeaveId, w2: crate::WeaveId, run: RunReport) -> Result<CollabReport, RtError> {
    let left = decode_f64s(rt.read(w1, "solver", "u")?.as_bytes().unwrap_or(&[]));
    let right = decode_f64s(rt.read(w2, "solver", "u")?.as_bytes().unwrap_or(&[]));
    let gamma = rt.read(w1, "mediator", "gamma")?.as_real().unwrap_or(f64::NAN);
    let iters = rt.read(w1, "mediator", "updates")?.as_int().unwrap_or(0) as usize;
    let converged = rt.read(w1, "mediator", "converged")?.as_int() == Some(1);
    let history = decode_f64s(rt.read(w1, "mediator", "history")?.as_bytes().unwrap_or(&[]));
    if left.len() != problem.xi_index + 1 || right.len() != problem.n - problem.xi_index + 1 {
        return Err(RtError::Guest("solver cells missing a solution".into()));
    }
    let mut u = left;
    u.extend_from_slice(&right[1..]);
    Ok(CollabReport { u, gamma, iters, converged, history, run })
}

pub fn run_collab(problem: &CollabProblem, policy: SchedulerPolicy) -> Result<CollabReport, RtError> {
    problem.validate()?;
    let rt = Runtime::new();
    let (w1, w2) = build_tapestry(&rt, problem, "", false)?;
    let run = rt.run(policy)?;
    if !run.all_finished() {
        rt.shutdown();
        return Err(RtError::Guest(format!("solver strings failed: {:?}", run.failed())));
    }
    let report = collect(&rt, problem, w1, w2, run);
    rt.shutdown();
    report
}

/// Same fixed point, opposite spawn order — used to show the result does
/// not depend on which solver moves first.
pub fn run_collab_reversed(problem: &CollabProblem, policy: SchedulerPolicy) -> Result<CollabReport, RtError> {
    problem.validate()?;
    let rt = Runtime::new();
    let (w1, w2) = build_tapestry(&rt, problem, "", true)?;
    let run = rt.run(policy)?;
    if !run.all_finished() {
        rt.shutdown();
        return Err(RtError::Guest(format!("solver strings failed: {:?}", run.failed())));
    }
    let report = collect(&rt, problem, w1, w2, run);
    rt.shutdown();
    report
}

#[derive(Debug, Clone)]
pub struct Fig2Report {
    pub first: CollabReport,
    pub second: CollabReport,
    /// String-id partition induced by the sharing structure.
    pub classes: Vec<Vec<u32>>,
}

/// Two independent solver pairs in one tapestry: four solver beads, two
/// mediator beads, four weaves, four strings, two equivalence classes.
pub fn run_fig2(
    first: &CollabProblem,
    second: &CollabProblem,
    policy: SchedulerPolicy,
) -> Result<Fig2Report, RtError> {
    first.validate()?;
    second.validate()?;
    let rt = Runtime::new();
    let (a1, a2) = build_tapestry(&rt, first, "a", false)?;
    let (b1, b2) = build_tapestry(&rt, second, "b", false)?;
    let classes = rt.equivalence_classes();
    let run = rt.run(policy)?;
    if !run.all_finished() {
        rt.shutdown();
        return Err(RtError::Guest(format!("solver strings failed: {:?}", run.failed())));
    }
    let out = Fig2Report {
        first: collect(&rt, first, a1, a2, run.clone())?,
        second: collect(&rt, second, b1, b2, run)?,
        classes,
    };
    rt.shutdown();
    Ok(out)
}
