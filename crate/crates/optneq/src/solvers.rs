//! The two distributed loops and the centralized reference solvers.
//!
//! Both loops keep a stacked decision matrix `X` (row `i` is agent `i`'s copy)
//! and a tracker matrix `Y` whose column mean always equals the column mean of
//! the last evaluated regularized map — the tracking identity that makes the
//! trackers a usable surrogate for the network-average direction. The
//! centralized [`tikhonov_solve`] / [`sequential_regularization`] pair provides
//! ground truth: the regularized problems are solved to tolerance one weight at
//! a time, warm-started along the trajectory.

use ndarray::{Array1, Array2, ArrayView1};


use crate::graph::{check_root_intersection, MixingMatrix, Stochasticity};
use crate::problem::ProblemInstance;
use crate::rng::DrawKey;
use crate::schedule::ScheduleParams;
use crate::{Algorithm, Error, Result};

/// Iterate state shared by both loops.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Stacked decision copies, one row per agent.
    pub x: Array2<f64>,
    /// Stacked trackers.
    pub y: Array2<f64>,
    /// Iterations completed.
    pub iter: u64,
    /// Cached stacked regularized map from the latest evaluation; re-evaluating
    /// instead of caching would re-draw the noise and silently break tracking.
    pub last_map: Array2<f64>,
}

impl SolverState {
    /// Relative gap between the column means of `Y` and of the cached map —
    /// zero in exact arithmetic.
    pub fn tracking_gap(&self) -> f64 {
        let m = self.y.nrows() as f64;
        let ybar = self.y.sum_axis(ndarray::Axis(0)) / m;
        let gbar = self.last_map.sum_axis(ndarray::Axis(0)) / m;
        let num = (&ybar - &gbar).iter().map(|t| t * t).sum::<f64>().sqrt();
        let den = gbar.iter().map(|t| t * t).sum::<f64>().sqrt();
        num / den.max(1.0)
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        let finite =
            self.x.iter().all(|t| t.is_finite()) && self.y.iter().all(|t| t.is_finite());
        if finite {
            return Ok(());
        }
        let peak = self
            .x
            .iter()
            .chain(self.y.iter())
            .filter(|t| t.is_finite())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        Err(Error::Divergence {
            iter: self.iter,
            detail: format!("{what}: non-finite entries, largest finite magnitude {peak:e}"),
        })
    }
}

fn stack_rows(
    inst: &ProblemInstance,
    x: &Array2<f64>,
    reg: f64,
    noise: Option<(u64, u32, u64)>,
) -> Result<Array2<f64>> {
    let (m, n) = (x.nrows(), x.ncols());
    let mut g = Array2::zeros((m, n));
    for i in 0..m {
        let key = noise.map(|(seed, path, k)| DrawKey::at(seed, path, k, i as u32));
        let row = inst.regularized_row(i, x.row(i), reg, key)?;
        g.row_mut(i).assign(&row);
    }
    Ok(g)
}

fn check_shapes(inst: &ProblemInstance, mixing: &MixingMatrix, x0: &Array2<f64>) -> Result<()> {
    let m = inst.agents();
    let n = inst.dim();
    if mixing.m() != m {
        return Err(Error::Dimension(format!(
            "mixing matrix is {}x{} for {m} agents",
            mixing.m(),
            mixing.m()
        )));
    }
    if x0.nrows() != m || x0.ncols() != n {
        return Err(Error::Dimension(format!(
            "initial stack is {}x{}, expected {m}x{n}",
            x0.nrows(),
            x0.ncols()
        )));
    }
    Ok(())
}

/// Iteratively regularized push-pull loop for directed networks.
///
/// One step pulls the stepped decisions through the row-stochastic matrix,
/// re-evaluates the regularized map at the new points with the next weight,
/// and pushes the tracker correction through the column-stochastic matrix.
pub struct PushPull<'a> {
    inst: &'a ProblemInstance,
    sched: ScheduleParams,
    pull: &'a MixingMatrix,
    push: &'a MixingMatrix,
    step_multipliers: Option<Array1<f64>>,
}

impl<'a> PushPull<'a> {
    /// Validate the setup: matrix kinds and stochasticity, shared root of the
    /// two influence digraphs, schedule admissibility in push-pull mode.
    pub fn new(
        inst: &'a ProblemInstance,
        sched: ScheduleParams,
        pull: &'a MixingMatrix,
        push: &'a MixingMatrix,
    ) -> Result<Self> {
        if pull.kind != Stochasticity::Row {
            return Err(Error::Validation("push-pull needs a row-stochastic pull matrix".into()));
        }
        if push.kind != Stochasticity::Column {
            return Err(Error::Validation(
                "push-pull needs a column-stochastic push matrix".into(),
            ));
        }
        pull.validate()?;
        push.validate()?;
        if pull.m() != inst.agents() || push.m() != inst.agents() {
            return Err(Error::Dimension(format!(
                "mixing matrices are {}x{} / {}x{} for {} agents",
                pull.m(),
                pull.m(),
                push.m(),
                push.m(),
                inst.agents()
            )));
        }
        if !check_root_intersection(pull, push)? {
            return Err(Error::Validation(
                "pull and push influence digraphs share no root; tracking cannot contract"
                    .into(),
            ));
        }
        if sched.mode != Algorithm::IrPushPull {
            return Err(Error::Validation("schedule is not in push-pull mode".into()));
        }
        sched.validate()?;
        Ok(Self { inst, sched, pull, push, step_multipliers: None })
    }

    /// Per-agent stepsize multipliers in (0, 1]; default is uniform 1.
    pub fn with_step_multipliers(mut self, mult: &[f64]) -> Result<Self> {
        if mult.len() != self.inst.agents() {
            return Err(Error::Dimension(format!(
                "{} multipliers for {} agents",
                mult.len(),
                self.inst.agents()
            )));
        }
        if mult.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Validation(
                "stepsize multipliers must lie in (0, 1]".into(),
            ));
        }
        self.step_multipliers = Some(Array1::from_vec(mult.to_vec()));
        Ok(self)
    }

    /// Start the loop: trackers are seeded with the regularized map at the
    /// initial points and the initial weight.
    pub fn init(&self, x0: Array2<f64>) -> Result<SolverState> {
        check_shapes(self.inst, self.pull, &x0)?;
        let g0 = stack_rows(self.inst, &x0, self.sched.reg(0), None)?;
        let state =
            SolverState { x: x0, y: g0.clone(), iter: 0, last_map: g0 };
        state.check_finite("initial stack")?;
        Ok(state)
    }

    /// Advance one synchronized round.
    pub fn step(&self, s: &mut SolverState) -> Result<()> {
        let gamma = self.sched.step(s.iter);
        let mut stepped = s.x.clone();
        for (i, mut row) in stepped.rows_mut().into_iter().enumerate() {
            let scale = gamma * self.step_multipliers.as_ref().map_or(1.0, |m| m[i]);
            row.scaled_add(-scale, &s.y.row(i));
        }
        let x_next = self.pull.entries.dot(&stepped);
        let g_next = stack_rows(self.inst, &x_next, self.sched.reg(s.iter + 1), None)?;
        let y_next = self.push.entries.dot(&s.y) + &g_next - &s.last_map;
        s.x = x_next;
        s.y = y_next;
        s.last_map = g_next;
        s.iter += 1;
        s.check_finite("push-pull step")
    }
}

/// Iteratively regularized stochastic gradient tracking for undirected
/// networks: one doubly stochastic gossip matrix carries both the decisions
/// and the trackers, and the map rows are sampled — one noise realization per
/// agent and iteration, shared between the map and gradient terms.
pub struct Dsgt<'a> {
    inst: &'a ProblemInstance,
    sched: ScheduleParams,
    gossip: &'a MixingMatrix,
    seed: u64,
    path: u32,
}

impl<'a> Dsgt<'a> {
    pub fn new(
        inst: &'a ProblemInstance,
        sched: ScheduleParams,
        gossip: &'a MixingMatrix,
        seed: u64,
        path: u32,
    ) -> Result<Self> {
        if gossip.kind != Stochasticity::Doubly {
            return Err(Error::Validation("gossip matrix must be doubly stochastic".into()));
        }
        gossip.validate()?;
        if gossip.m() != inst.agents() {
            return Err(Error::Dimension(format!(
                "gossip matrix is {}x{} for {} agents",
                gossip.m(),
                gossip.m(),
                inst.agents()
            )));
        }
        if !gossip_connected(gossip) {
            return Err(Error::Validation(
                "gossip matrix's support graph is disconnected".into(),
            ));
        }
        if sched.mode != Algorithm::IrDsgt {
            return Err(Error::Validation("schedule is not in gossip mode".into()));
        }
        sched.validate()?;
        Ok(Self { inst, sched, gossip, seed, path })
    }

    /// Start the loop with the iteration-0 noise draws.
    pub fn init(&self, x0: Array2<f64>) -> Result<SolverState> {
        check_shapes(self.inst, self.gossip, &x0)?;
        let g0 = stack_rows(self.inst, &x0, self.sched.reg(0), Some((self.seed, self.path, 0)))?;
        let state =
            SolverState { x: x0, y: g0.clone(), iter: 0, last_map: g0 };
        state.check_finite("initial stack")?;
        Ok(state)
    }

    /// Advance one synchronized round with fresh draws for the new iterate.
    pub fn step(&self, s: &mut SolverState) -> Result<()> {
        let gamma = self.sched.step(s.iter);
        let stepped = &s.x - &(gamma * &s.y);
        let x_next = self.gossip.entries.dot(&stepped);
        let g_next = stack_rows(
            self.inst,
            &x_next,
            self.sched.reg(s.iter + 1),
            Some((self.seed, self.path, s.iter + 1)),
        )?;
        let y_next = self.gossip.entries.dot(&s.y) + &g_next - &s.last_map;
        s.x = x_next;
        s.y = y_next;
        s.last_map = g_next;
        s.iter += 1;
        s.check_finite("gossip step")
    }
}

fn gossip_connected(w: &MixingMatrix) -> bool {
    let m = w.m();
    let mut seen = vec![false; m];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for j in 0..m {
            if j != v && !seen[j] && w.entries[(v, j)] > 0.0 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|t| t)
}

/// One point of the computed Tikhonov trajectory.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrajectoryPoint {
    /// Regularization weight of this stage.
    pub reg: f64,
    /// Solution of the regularized problem at this weight.
    pub x: Vec<f64>,
    /// Residual `‖F(x)+reg·∇f(x)‖` actually achieved.
    pub residual: f64,
    /// Tolerance the stage was solved to.
    pub tol: f64,
}

/// Output of [`sequential_regularization`]: the trajectory endpoint is the
/// ground-truth approximation of the optimal equilibrium.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OracleSolution {
    pub x_star: Vec<f64>,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl OracleSolution {
    pub fn x_star_array(&self) -> Array1<f64> {
        Array1::from_vec(self.x_star.clone())
    }
}

/// Default budget of map evaluations per regularization stage.
pub const TIKHONOV_EVAL_BUDGET: u64 = 1_000_000;

/// Outcome of one damped-Newton run at a fixed weight.
struct CoreSolve {
    best: Array1<f64>,
    best_res: f64,
    converged: bool,
}

/// Damped semismooth Newton at one fixed weight; the workhorse behind
/// [`tikhonov_solve`]. Runs until the tolerance is met, the shared evaluation
/// budget runs out, descent dies, or the residual stops making headway.
fn newton_core(
    inst: &ProblemInstance,
    reg: f64,
    tol: f64,
    max_evals: u64,
    x0: Array1<f64>,
    evals: &mut u64,
) -> Result<CoreSolve> {
    let n = inst.dim();
    let eval = |p: &Array1<f64>, evals: &mut u64| -> Result<Array1<f64>> {
        *evals += 1;
        inst.regularized_sum(p.view(), reg)
    };
    let mut x = x0;
    let mut r = eval(&x, evals)?;
    let mut res = norm(&r);
    if !res.is_finite() {
        return Err(Error::Numerical(
            "non-finite residual at the start point".into(),
        ));
    }
    let mut best = x.clone();
    let mut best_res = res;
    let mut window_res = res;
    let mut outer: u32 = 0;
    'outer: loop {
        if best_res <= tol {
            break;
        }
        outer += 1;
        if outer > 500 {
            break;
        }
        if outer % 40 == 0 {
            // Microscopic accepted steps can go on for hundreds of thousands
            // of evaluations without getting anywhere; treat a flat stretch
            // as a failed run and let the caller rescue it by continuation.
            if res > 0.95 * window_res {
                break;
            }
            window_res = res;
        }
        if *evals + 3 * n as u64 + 1 > max_evals {
            break;
        }
        // Generalized Jacobian by differences. The map is smooth except along
        // coordinate kinks (box edges of the smoothed projection), where the
        // one-sided slopes jump. A centred stencil that straddles a kink blends
        // the two regional slopes into a model that belongs to neither region
        // and can leave the search with no descent direction at all, so when
        // the forward and backward columns disagree we probe one step further
        // and keep the one-sided column taken entirely inside a single region.
        let mut jac = Array2::zeros((n, n));
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut probe = x.clone();
            probe[j] = x[j] + h;
            let fwd = eval(&probe, evals)?;
            probe[j] = x[j] - h;
            let bwd = eval(&probe, evals)?;
            let dp = (&fwd - &r) / h;
            let dm = (&r - &bwd) / h;
            let gap = norm(&(&dp - &dm));
            let scale = norm(&dp) + norm(&dm) + 1.0;
            let col = if gap <= 1e-4 * scale {
                (&fwd - &bwd) / (2.0 * h)
            } else {
                probe[j] = x[j] + 2.0 * h;
                let fwd2 = eval(&probe, evals)?;
                let dpp = (&fwd2 - &fwd) / h;
                if norm(&(&dpp - &dp)) <= 1e-4 * scale {
                    dp
                } else {
                    dm
                }
            };
            if col.iter().any(|t| !t.is_finite()) {
                break 'outer;
            }
            jac.column_mut(j).assign(&col);
        }
        let mut accepted = false;
        let rhs = -&r;
        if let Ok(step) = crate::linalg::solve_linear(&jac, rhs.view()) {
            let mut t = 1.0;
            for _ in 0..30 {
                if *evals >= max_evals {
                    break;
                }
                let cand = &x + &(t * &step);
                let rc = eval(&cand, evals)?;
                let resc = norm(&rc);
                if resc.is_finite() && resc < res * (1.0 - 1e-4 * t) {
                    x = cand;
                    r = rc;
                    res = resc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            // Damped least-squares steps escalate the weight until the
            // residual norm drops; they slide past kinks that block the
            // undamped direction.
            let gram = jac.t().dot(&jac);
            let grad = jac.t().dot(&r);
            let scale = {
                let tr: f64 = (0..n).map(|i| gram[(i, i)]).sum();
                (tr / n as f64).max(f64::MIN_POSITIVE)
            };
            let mut mu = 1e-8 * scale;
            for _ in 0..40 {
                if *evals >= max_evals || !mu.is_finite() {
                    break;
                }
                let mut damped = gram.clone();
                for i in 0..n {
                    damped[(i, i)] += mu;
                }
                let neg_grad = -&grad;
                let Ok(step) = crate::linalg::solve_linear(&damped, neg_grad.view())
                else {
                    mu *= 10.0;
                    continue;
                };
                let cand = &x + &step;
                let rc = eval(&cand, evals)?;
                let resc = norm(&rc);
                if resc.is_finite() && resc < res * (1.0 - 1e-9) {
                    x = cand;
                    r = rc;
                    res = resc;
                    accepted = true;
                    break;
                }
                mu *= 10.0;
            }
        }
        if !accepted {
            break;
        }
        if res < best_res {
            best_res = res;
            best.assign(&x);
        }
    }
    let converged = best_res <= tol;
    Ok(CoreSolve { best, best_res, converged })
}

/// Full-step pattern search for box-structured piecewise-affine maps.
///
/// The stacked game map is affine except for the coordinate-wise smoothed
/// projection, whose slope changes at the box edges `0` and `cap_j`. Fixing,
/// for every coordinate, which of the three pieces (below, inside, above) it
/// lies on makes the whole map affine, so the solve reduces to finding the
/// pattern whose affine root lands back on its own pieces. Each candidate
/// pattern is processed by recovering its affine model from clean difference
/// quotients at a representative point deep inside the region, jumping to
/// the model's root with no step damping at all, and reclassifying the root.
///
/// Candidates come off a deterministic queue seeded with the pattern of
/// `x0`. A processed pattern enqueues, in order, the pattern its root
/// classifies to (the Newton-informed guess), the single-coordinate flips
/// toward that guess in index order (the least-index pivots that break
/// simple cycles in principal pivoting), and finally every remaining
/// one-coordinate neighbor at the back of the queue, so a stretch of
/// mutually-pointing patterns degrades into a breadth-first sweep instead of
/// a dead end. The walk stops at a self-consistent pattern, on the
/// evaluation budget, or at a pattern cap (for five or fewer coordinates the
/// cap admits every pattern there is).
///
/// Norm-descent globalizations can park in a kink valley — a Clarke-
/// stationary trough of the residual norm far from the actual root, where
/// each adjacent region's Newton direction points into the other region and
/// every line search dies. Full steps are immune: they never compare norms,
/// so a transient residual increase while hopping regions cannot trap them.
fn pattern_walk(
    inst: &ProblemInstance,
    reg: f64,
    caps: &Array1<f64>,
    max_evals: u64,
    x0: &Array1<f64>,
    evals: &mut u64,
) -> Result<Option<Array1<f64>>> {
    let n = inst.dim();
    let classify = |x: &Array1<f64>| -> Vec<u8> {
        (0..n)
            .map(|j| {
                if x[j] < 0.0 {
                    0
                } else if x[j] <= caps[j] {
                    1
                } else {
                    2
                }
            })
            .collect()
    };
    let eval = |p: &Array1<f64>, evals: &mut u64| -> Result<Array1<f64>> {
        *evals += 1;
        inst.regularized_sum(p.view(), reg)
    };
    let budget = if n <= 5 { 3usize.pow(n as u32) } else { 3 * n + 780 };
    let mut queue = std::collections::VecDeque::new();
    let mut seen = std::collections::HashSet::new();
    let start = classify(x0);
    seen.insert(start.clone());
    queue.push_back(start);
    let mut processed = 0usize;
    while let Some(pattern) = queue.pop_front() {
        if processed >= budget || *evals + 2 * n as u64 + 2 > max_evals {
            return Ok(None);
        }
        processed += 1;
        // Representative point far from every breakpoint of this pattern.
        let mut rep = Array1::zeros(n);
        for j in 0..n {
            rep[j] = match pattern[j] {
                0 => -(1.0f64.max(0.01 * caps[j])),
                1 => 0.5 * caps[j],
                _ => caps[j] + 1.0f64.max(0.01 * caps[j]),
            };
        }
        let t_rep = eval(&rep, evals)?;
        let mut jac = Array2::zeros((n, n));
        let mut clean = true;
        for j in 0..n {
            let h = 1e-6 * rep[j].abs().max(1.0);
            let mut hi = rep.clone();
            hi[j] += h;
            let mut lo = rep.clone();
            lo[j] -= h;
            let col = (&eval(&hi, evals)? - &eval(&lo, evals)?) / (2.0 * h);
            if col.iter().any(|t| !t.is_finite()) {
                clean = false;
                break;
            }
            jac.column_mut(j).assign(&col);
        }
        let root = if clean {
            let q = &t_rep - &jac.dot(&rep);
            let rhs = -&q;
            match crate::linalg::solve_linear(&jac, rhs.view()) {
                Ok(root) if root.iter().all(|t| t.is_finite()) => Some(root),
                _ => None,
            }
        } else {
            None
        };
        let proposed = root.as_ref().map(|r| classify(r));
        if let (Some(root), Some(proposed)) = (root, proposed) {
            if proposed == pattern {
                return Ok(Some(root));
            }
            let mut informed = vec![proposed.clone()];
            for j in 0..n {
                if proposed[j] != pattern[j] {
                    let mut single = pattern.clone();
                    single[j] = proposed[j];
                    informed.push(single);
                }
            }
            for cand in informed.into_iter().rev() {
                if seen.insert(cand.clone()) {
                    queue.push_front(cand);
                }
            }
        }
        for j in 0..n {
            for piece in 0..3u8 {
                if piece == pattern[j] {
                    continue;
                }
                let mut neighbor = pattern.clone();
                neighbor[j] = piece;
                if seen.insert(neighbor.clone()) {
                    queue.push_back(neighbor);
                }
            }
        }
    }
    Ok(None)
}

/// Solve the regularized problem `F(z) + reg·∇f(z) = 0` to residual `tol`.
///
/// Damped semismooth Newton iteration: the Jacobian comes from differences
/// (one-sided across slope kinks of the smoothed projection, centred
/// elsewhere), the step solves that linear system directly, and a geometric
/// line search keeps the residual norm decreasing. The stacked game map is
/// affine plus coordinate-wise piecewise-linear smoothing terms, so the local
/// model is exact inside each region and the iteration settles in a handful
/// of steps — including at tiny weights, where near-singular directions of
/// the interaction matrix make first-order fixed-point iterations crawl. When
/// a plain Newton step is rejected — a singular local model or a kink
/// blocking descent — the iteration falls back to Levenberg–Marquardt steps
/// on the residual norm with an escalating damping weight.
///
/// Norm descent alone can park in a kink valley: a slope breakpoint where
/// each adjacent region's Newton direction points into the other region, so
/// no direction lowers the residual even though the (unique) root sits
/// elsewhere. Two rescues run in turn when the damped iteration gives up
/// short of the tolerance. First, on instances that expose their box, the
/// full-step [`pattern_walk`] hops between region patterns with no norm
/// comparison at all and lands on the root's own pattern directly. Second, a
/// continuation in the weight: find a smaller weight solvable from the same
/// start, then walk the weight back up in geometric hops, re-solving
/// warm-started and shrinking a hop whenever it fails, since region patterns
/// change gradually along the weight path.
///
/// `max_evals` budgets map evaluations across all attempts; one Newton step
/// costs up to `3n + 1` of them plus the line search. Returns the iterate and
/// its residual; [`Error::NotConverged`] carries the best iterate at the
/// requested weight when the budget runs out or every rescue stalls.
pub fn tikhonov_solve(
    inst: &ProblemInstance,
    reg: f64,
    tol: f64,
    max_evals: u64,
    start: Option<ArrayView1<f64>>,
) -> Result<(Array1<f64>, f64)> {
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(Error::Validation(format!(
            "regularization weight must be positive, got {reg}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("tolerance must be positive, got {tol}")));
    }
    let n = inst.dim();
    let x0 = match start {
        Some(z0) => {
            if z0.len() != n {
                return Err(Error::Dimension(format!(
                    "start point has {} coordinates, expected {n}",
                    z0.len()
                )));
            }
            z0.to_owned()
        }
        None => Array1::zeros(n),
    };
    let mut evals: u64 = 0;
    let direct = newton_core(inst, reg, tol, max_evals, x0.clone(), &mut evals)?;
    if direct.converged {
        return Ok((direct.best, direct.best_res));
    }
    let mut best = direct.best;
    let mut best_res = direct.best_res;
    if let Some(params) = inst.cournot_params() {
        if let Some(root) =
            pattern_walk(inst, reg, &params.caps, max_evals, &x0, &mut evals)?
        {
            // The walk lands on the consistent pattern's affine root; a short
            // damped polish clears the difference-quotient rounding left in
            // the recovered model.
            let polish = newton_core(inst, reg, tol, max_evals, root, &mut evals)?;
            if polish.converged {
                return Ok((polish.best, polish.best_res));
            }
            if polish.best_res < best_res {
                best_res = polish.best_res;
                best = polish.best;
            }
        }
    }
    // Anchor: a weight low enough to be solvable from the original start.
    let mut anchor: Option<(f64, Array1<f64>)> = None;
    let mut w = reg;
    for _ in 0..4 {
        w /= 10.0;
        if evals >= max_evals {
            break;
        }
        let attempt = newton_core(inst, w, tol, max_evals, x0.clone(), &mut evals)?;
        if attempt.converged {
            anchor = Some((w, attempt.best));
            break;
        }
    }
    if let Some((mut lo, mut xa)) = anchor {
        // Climb from the anchor back to the requested weight. Each round
        // first tries the full remaining hop, then shrinks it by geometric
        // bisection until some hop lands; a round that cannot advance at all
        // ends the climb.
        'climb: while evals < max_evals {
            let mut hi = reg;
            loop {
                let attempt = newton_core(inst, hi, tol, max_evals, xa.clone(), &mut evals)?;
                if attempt.converged {
                    if hi == reg {
                        return Ok((attempt.best, attempt.best_res));
                    }
                    lo = hi;
                    xa = attempt.best;
                    continue 'climb;
                }
                if hi == reg && attempt.best_res < best_res {
                    best_res = attempt.best_res;
                    best = attempt.best;
                }
                hi = (0.5 * (lo.ln() + hi.ln())).exp();
                if hi <= lo * 1.001 || evals >= max_evals {
                    break 'climb;
                }
            }
        }
    }
    Err(Error::NotConverged { best: best.to_vec(), residual: best_res, iters: evals })
}

fn norm(v: &Array1<f64>) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// Solve a strictly decreasing sweep of regularization weights, warm-starting
/// each stage at the previous solution. The endpoint approximates the optimal
/// equilibrium; the recorded trajectory lets callers check the Cauchy behavior
/// of successive stage solutions.
pub fn sequential_regularization(
    inst: &ProblemInstance,
    regs: &[f64],
    tols: &[f64],
    start: Option<ArrayView1<f64>>,
    max_evals_per_stage: u64,
) -> Result<OracleSolution> {
    if regs.is_empty() {
        return Err(Error::Validation("need at least one regularization stage".into()));
    }
    if regs.len() != tols.len() {
        return Err(Error::Dimension(format!(
            "{} weights but {} tolerances",
            regs.len(),
            tols.len()
        )));
    }
    for w in regs.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Validation(format!(
                "weights must strictly decrease, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if regs.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Validation("weights must be positive".into()));
    }
    let mut current: Option<Array1<f64>> = start.map(|v| v.to_owned());
    let mut trajectory = Vec::with_capacity(regs.len());
    for (&reg, &tol) in regs.iter().zip(tols) {
        let (x, residual) = tikhonov_solve(
            inst,
            reg,
            tol,
            max_evals_per_stage,
            current.as_ref().map(|c| c.view()),
        )?;
        trajectory.push(TrajectoryPoint { reg, x: x.to_vec(), residual, tol });
        current = Some(x);
    }
    let x_star = current.expect("at least one stage ran").to_vec();
    Ok(OracleSolution { x_star, trajectory })
}
