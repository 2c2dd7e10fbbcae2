//! Best-subset maximization of `v_Sᵀ Σ̂_SS⁻¹ v_S` over `|S| = s`.
//!
//! Four solvers share one problem type: greedy forward selection driven by
//! incremental Cholesky columns, an exact branch-and-bound over a candidate
//! set, the two-step screen-then-search combination, and full enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::{dot, Real};
use crate::linalg::{Cholesky, CovarianceSource, Matrix, SINGULAR_PIVOT_TOL};

/// Largest candidate set branch-and-bound accepts.
pub const MAX_BB_CANDIDATES: usize = 40;
/// Default forward-selection screen before branch-and-bound.
pub const DEFAULT_SCREEN_SIZE: usize = 40;
/// Largest number of subsets exhaustive enumeration accepts.
pub const MAX_EXHAUSTIVE_SUBSETS: u128 = 1_000_000;

/// How the subset maximization is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SearchMethod {
    /// Forward selection to `screen_size` candidates, then branch-and-bound.
    /// A `node_budget` caps the branch-and-bound; when it is exhausted the
    /// best subset found so far is returned and flagged inexact.
    TwoStep {
        screen_size: usize,
        node_budget: Option<u64>,
    },
    /// Greedy forward selection only.
    Forward,
    /// Full enumeration of all size-`s` subsets.
    Exhaustive,
}

impl Default for SearchMethod {
    fn default() -> Self {
        SearchMethod::TwoStep {
            screen_size: DEFAULT_SCREEN_SIZE,
            node_budget: None,
        }
    }
}

impl SearchMethod {
    pub fn two_step(screen_size: usize) -> Self {
        SearchMethod::TwoStep {
            screen_size,
            node_budget: None,
        }
    }
}

/// Objective data: covariance access, the cross-moment vector `v`, and `s`.
#[derive(Debug, Clone, Copy)]
pub struct SubsetProblem<'a, F> {
    pub cov: &'a CovarianceSource<F>,
    pub target: &'a [F],
    pub s: usize,
}

impl<'a, F: Real> SubsetProblem<'a, F> {
    pub fn new(cov: &'a CovarianceSource<F>, target: &'a [F], s: usize) -> Result<Self> {
        let p = cov.p();
        if target.len() != p {
            return Err(Error::InvalidArgument(format!(
                "target has length {}, expected p = {p}",
                target.len()
            )));
        }
        if s < 1 || s > p {
            return Err(Error::InvalidArgument(format!(
                "subset size s = {s} must satisfy 1 <= s <= p = {p}"
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("target vector is not finite".into()));
        }
        Ok(SubsetProblem { cov, target, s })
    }

    fn pivot_threshold(&self) -> F {
        let max_diag = self
            .cov
            .diag()
            .iter()
            .fold(F::zero(), |m, v| if *v > m { *v } else { m });
        F::c(SINGULAR_PIVOT_TOL) * max_diag
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSolution<F> {
    /// Selected indices, increasing.
    pub subset: Vec<usize>,
    /// Attained `v_Sᵀ Σ̂_SS⁻¹ v_S`.
    pub value: F,
    /// Unit-norm maximizing direction, aligned with `subset`.
    pub alpha: Vec<F>,
    /// `false` when a node budget stopped the search early.
    pub exact: bool,
    /// `true` when forward selection ran out of non-collinear candidates
    /// before reaching `s`; `subset` is then the largest achievable set.
    pub stalled: bool,
}

impl<F: Real> SubsetSolution<F> {
    /// `alpha` scattered into a length-`p` vector.
    pub fn alpha_dense(&self, p: usize) -> Vec<F> {
        let mut a = vec![F::zero(); p];
        for (&j, &v) in self.subset.iter().zip(&self.alpha) {
            a[j] = v;
        }
        a
    }
}

/// Evaluates the objective at one subset and recovers `alpha ∝ Σ̂_SS⁻¹ v_S`.
pub fn evaluate_subset<F: Real>(
    cov: &CovarianceSource<F>,
    target: &[F],
    subset: &[usize],
) -> Result<SubsetSolution<F>> {
    let mut subset = subset.to_vec();
    subset.sort_unstable();
    let gram = cov.principal(&subset);
    let chol = Cholesky::new(&gram, F::c(SINGULAR_PIVOT_TOL))?;
    let vs: Vec<F> = subset.iter().map(|&j| target[j]).collect();
    let w = chol.solve(&vs);
    let value = dot(&vs, &w).max(F::zero());
    let norm = dot(&w, &w).sqrt();
    let alpha = if norm > F::zero() {
        w.iter().map(|x| *x / norm).collect()
    } else {
        let mut e = vec![F::zero(); subset.len()];
        e[0] = F::one();
        e
    };
    Ok(SubsetSolution {
        subset,
        value,
        alpha,
        exact: true,
        stalled: false,
    })
}

/// Greedy selection order with the cumulative objective after each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardPath<F> {
    pub selected: Vec<usize>,
    pub values: Vec<F>,
    pub stalled: bool,
}

/// Forward selection that stops early, rather than failing, when every
/// remaining candidate is collinear with the current set.
pub fn forward_path<F: Real>(prob: &SubsetProblem<'_, F>, d: usize) -> ForwardPath<F> {
    let p = prob.cov.p();
    let d = d.min(p);
    let tol = prob.pivot_threshold();
    // residual variance and residual cross moment of every candidate given
    // the current selection; the gain of adding j is u_j² / r_j
    let mut resid_var: Vec<F> = prob.cov.diag().to_vec();
    let mut resid_cross: Vec<F> = prob.target.to_vec();
    let mut taken = vec![false; p];
    let mut factor_cols: Vec<Vec<F>> = Vec::with_capacity(d);
    let mut selected = Vec::with_capacity(d);
    let mut values = Vec::with_capacity(d);
    let mut total = F::zero();
    let mut stalled = false;

    while selected.len() < d {
        let mut best: Option<(usize, F)> = None;
        for j in 0..p {
            if taken[j] || !(resid_var[j] > tol) {
                continue;
            }
            let gain = resid_cross[j] * resid_cross[j] / resid_var[j];
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((j, _)) = best else {
            stalled = true;
            break;
        };
        let pivot = resid_var[j].sqrt();
        let col = prob.cov.column(j);
        let mut b: Vec<F> = col;
        for prev in &factor_cols {
            let bj = prev[j];
            for (bi, pi) in b.iter_mut().zip(prev) {
                *bi -= *pi * bj;
            }
        }
        for bi in b.iter_mut() {
            *bi /= pivot;
        }
        let t = resid_cross[j] / pivot;
        for i in 0..p {
            resid_var[i] -= b[i] * b[i];
            resid_cross[i] -= b[i] * t;
        }
        taken[j] = true;
        total += t * t;
        selected.push(j);
        values.push(total);
        factor_cols.push(b);
    }
    ForwardPath {
        selected,
        values,
        stalled,
    }
}

/// First `d` forward-selected indices in selection order.
pub fn forward_select<F: Real>(prob: &SubsetProblem<'_, F>, d: usize) -> Result<Vec<usize>> {
    let p = prob.cov.p();
    if d < prob.s || d > p {
        return Err(Error::InvalidArgument(format!(
            "forward selection depth d = {d} must satisfy s = {} <= d <= p = {p}",
            prob.s
        )));
    }
    let path = forward_path(prob, d);
    if path.selected.len() < d {
        return Err(Error::SingularGram {
            position: path.selected.len(),
            pivot: 0.0,
            threshold: prob.pivot_threshold().to_f64_lossy(),
        });
    }
    Ok(path.selected)
}

/// Options for [`branch_and_bound_with`].
#[derive(Debug, Clone, Default)]
pub struct BranchOptions<F> {
    pub node_budget: Option<u64>,
    /// A known feasible subset and its value, used as the initial incumbent.
    pub incumbent: Option<(Vec<usize>, F)>,
}

struct Search<'a, F> {
    gram: Matrix<F>,
    vt: Vec<F>,
    cands: &'a [usize],
    s: usize,
    best_value: F,
    best_set: Option<Vec<usize>>,
    nodes: u64,
    budget: Option<u64>,
    exhausted: bool,
}

/// Inverse Gram over the current superset `T` with `w = H v_T` and
/// `f = v_Tᵀ H v_T`; rows follow `members`.
#[derive(Clone)]
struct Superset<F> {
    members: Vec<usize>,
    h: Matrix<F>,
    w: Vec<F>,
    f: F,
}

impl<F: Real> Superset<F> {
    fn removal_loss(&self, pos: usize) -> F {
        self.w[pos] * self.w[pos] / self.h[(pos, pos)]
    }

    /// Drops member at `pos` by a rank-one downdate of the inverse.
    fn without(&self, pos: usize) -> Superset<F> {
        let k = self.members.len();
        let hkk = self.h[(pos, pos)];
        let wk = self.w[pos];
        let keep: Vec<usize> = (0..k).filter(|&i| i != pos).collect();
        let mut h = Matrix::zeros(k - 1, k - 1);
        for (b, &j) in keep.iter().enumerate() {
            let hjk = self.h[(j, pos)];
            for (a, &i) in keep.iter().enumerate() {
                h[(a, b)] = self.h[(i, j)] - self.h[(i, pos)] * hjk / hkk;
            }
        }
        let w = keep
            .iter()
            .map(|&i| self.w[i] - self.h[(i, pos)] * wk / hkk)
            .collect();
        Superset {
            members: keep.iter().map(|&i| self.members[i]).collect(),
            h,
            w,
            f: self.f - wk * wk / hkk,
        }
    }
}

fn lex_less(a: &[usize], b: &[usize]) -> bool {
    a < b
}

impl<'a, F: Real> Search<'a, F> {
    fn offer(&mut self, mut set: Vec<usize>, value: F) {
        set.sort_unstable();
        let better = match &self.best_set {
            None => true,
            Some(cur) => value > self.best_value || (value == self.best_value && lex_less(&set, cur)),
        };
        if better {
            self.best_value = value;
            self.best_set = Some(set);
        }
    }

    fn leaf_value(&self, local: &[usize]) -> Option<F> {
        let gram = self.gram.principal(local);
        let chol = Cholesky::new(&gram, F::c(SINGULAR_PIVOT_TOL)).ok()?;
        let vs: Vec<F> = local.iter().map(|&i| self.vt[i]).collect();
        Some(chol.quad_form_inv(&vs))
    }

    /// `inside` are member positions (into `t.members`) forced into the subset.
    fn explore(&mut self, t: Superset<F>, inside: Vec<usize>) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if let Some(b) = self.budget {
            if self.nodes > b {
                self.exhausted = true;
                return;
            }
        }
        if self.best_set.is_some() && t.f <= self.best_value {
            return;
        }
        let size = t.members.len();
        if size == self.s {
            let set: Vec<usize> = t.members.iter().map(|&i| self.cands[i]).collect();
            self.offer(set, t.f);
            return;
        }
        if inside.len() == self.s {
            let local: Vec<usize> = inside.iter().map(|&pos| t.members[pos]).collect();
            if let Some(v) = self.leaf_value(&local) {
                let set = local.iter().map(|&i| self.cands[i]).collect();
                self.offer(set, v);
            }
            return;
        }
        // branch on the undecided member whose removal costs the most
        let mut branch: Option<(usize, F)> = None;
        for pos in 0..size {
            if inside.contains(&pos) {
                continue;
            }
            let loss = t.removal_loss(pos);
            if branch.map_or(true, |(_, l)| loss > l) {
                branch = Some((pos, loss));
            }
        }
        let Some((pos, _)) = branch else {
            return;
        };
        let excluded = t.without(pos);
        let mut with = inside.clone();
        with.push(pos);
        self.explore(t, with);
        // positions shift down by one past `pos` after removal
        let shifted: Vec<usize> = inside
            .iter()
            .map(|&i| if i > pos { i - 1 } else { i })
            .collect();
        self.explore(excluded, shifted);
    }
}

/// Exact maximizer over size-`s` subsets of `candidates`.
pub fn branch_and_bound<F: Real>(
    prob: &SubsetProblem<'_, F>,
    candidates: &[usize],
) -> Result<SubsetSolution<F>> {
    branch_and_bound_with(prob, candidates, &BranchOptions::default())
}

/// Branch-and-bound over `candidates`, pruning with the monotonicity of the
/// objective under superset inclusion: the value on any superset bounds every
/// subset of it. Children are explored best-first (the member with the
/// largest removal loss is forced in before it is excluded).
pub fn branch_and_bound_with<F: Real>(
    prob: &SubsetProblem<'_, F>,
    candidates: &[usize],
    opts: &BranchOptions<F>,
) -> Result<SubsetSolution<F>> {
    let s = prob.s;
    let k = candidates.len();
    if k > MAX_BB_CANDIDATES {
        return Err(Error::CandidateSetTooLarge {
            size: k,
            limit: MAX_BB_CANDIDATES,
        });
    }
    if k < s {
        return Err(Error::InvalidArgument(format!(
            "{k} candidates cannot hold a subset of size {s}"
        )));
    }
    let p = prob.cov.p();
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    if cands.len() != k || cands.last().is_some_and(|&j| j >= p) {
        return Err(Error::InvalidArgument(
            "candidates must be distinct indices below p".into(),
        ));
    }
    let gram = prob.cov.principal(&cands);
    let chol = Cholesky::new(&gram, F::c(SINGULAR_PIVOT_TOL))?;
    let vt: Vec<F> = cands.iter().map(|&j| prob.target[j]).collect();
    let h = chol.inverse();
    let w = h.matvec(&vt);
    let f = dot(&vt, &w);
    drop(chol);
    let root = Superset {
        members: (0..k).collect(),
        h,
        w,
        f,
    };
    let mut search = Search {
        gram,
        vt,
        cands: &cands,
        s,
        best_value: F::neg_infinity(),
        best_set: None,
        nodes: 0,
        budget: opts.node_budget,
        exhausted: false,
    };
    if let Some((set, value)) = &opts.incumbent {
        if set.len() == s && set.iter().all(|j| cands.binary_search(j).is_ok()) {
            search.offer(set.clone(), *value);
        }
    }
    search.explore(root, Vec::new());
    let exhausted = search.exhausted;
    let best = search.best_set.ok_or_else(|| Error::SingularGram {
        position: 0,
        pivot: 0.0,
        threshold: prob.pivot_threshold().to_f64_lossy(),
    })?;
    let mut sol = evaluate_subset(prob.cov, prob.target, &best)?;
    sol.exact = !exhausted;
    log::trace!("branch-and-bound visited {} nodes", search.nodes);
    Ok(sol)
}

fn best_single<F: Real>(prob: &SubsetProblem<'_, F>) -> Result<SubsetSolution<F>> {
    let tol = prob.pivot_threshold();
    let mut best: Option<(usize, F)> = None;
    for (j, (&v, &d)) in prob.target.iter().zip(prob.cov.diag()).enumerate() {
        if !(d > tol) {
            continue;
        }
        let val = v * v / d;
        if best.map_or(true, |(_, b)| val > b) {
            best = Some((j, val));
        }
    }
    let (j, _) = best.ok_or(Error::SingularGram {
        position: 0,
        pivot: 0.0,
        threshold: tol.to_f64_lossy(),
    })?;
    evaluate_subset(prob.cov, prob.target, &[j])
}

/// Forward screening to `screen_size` candidates followed by branch-and-bound
/// among them. For `s = 1` the exact maximizer is returned directly; for
/// `s > 40` the first `s` forward-selected indices are returned.
pub fn two_step<F: Real>(
    prob: &SubsetProblem<'_, F>,
    screen_size: usize,
) -> Result<SubsetSolution<F>> {
    two_step_with(prob, screen_size, None)
}

pub fn two_step_with<F: Real>(
    prob: &SubsetProblem<'_, F>,
    screen_size: usize,
    node_budget: Option<u64>,
) -> Result<SubsetSolution<F>> {
    let s = prob.s;
    let p = prob.cov.p();
    if screen_size < s {
        return Err(Error::InvalidArgument(format!(
            "screen size {screen_size} is smaller than s = {s}"
        )));
    }
    if s == 1 {
        return best_single(prob);
    }
    let screen = screen_size.min(p);
    let depth = if s > MAX_BB_CANDIDATES { s } else { screen };
    let path = forward_path(prob, depth);
    if path.selected.is_empty() {
        return best_single(prob);
    }
    if path.selected.len() < s {
        log::warn!(
            "forward selection stalled after {} of {} variables; returning the largest achievable set",
            path.selected.len(),
            s
        );
        let mut sol = evaluate_subset(prob.cov, prob.target, &path.selected)?;
        sol.stalled = true;
        return Ok(sol);
    }
    if s > MAX_BB_CANDIDATES {
        return evaluate_subset(prob.cov, prob.target, &path.selected[..s]);
    }
    let incumbent = Some((path.selected[..s].to_vec(), path.values[s - 1]));
    let opts = BranchOptions {
        node_budget,
        incumbent,
    };
    // the recursive residual variances can drift above the pivot threshold
    // for nearly collinear trailing candidates; drop those
    let mut cands = path.selected.clone();
    let mut trimmed = false;
    let mut sol = loop {
        match branch_and_bound_with(prob, &cands, &opts) {
            Err(Error::SingularGram { .. }) if cands.len() > s => {
                cands.pop();
                trimmed = true;
            }
            r => break r?,
        }
    };
    sol.stalled = (path.stalled || trimmed) && cands.len() < screen;
    Ok(sol)
}

/// Binomial coefficient, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Global maximizer by enumerating every size-`s` subset in lexicographic
/// order; collinear subsets are skipped and ties keep the first subset seen.
pub fn exhaustive<F: Real>(prob: &SubsetProblem<'_, F>) -> Result<SubsetSolution<F>> {
    let p = prob.cov.p();
    let s = prob.s;
    let count = binomial(p, s);
    if count > MAX_EXHAUSTIVE_SUBSETS {
        return Err(Error::ProblemTooLarge {
            count,
            limit: MAX_EXHAUSTIVE_SUBSETS,
        });
    }
    let tol = F::c(SINGULAR_PIVOT_TOL);
    let mut comb: Vec<usize> = (0..s).collect();
    let mut best: Option<(Vec<usize>, F)> = None;
    loop {
        let gram = prob.cov.principal(&comb);
        if let Ok(chol) = Cholesky::new(&gram, tol) {
            let vs: Vec<F> = comb.iter().map(|&j| prob.target[j]).collect();
            let v = chol.quad_form_inv(&vs);
            if best.as_ref().map_or(true, |(_, b)| v > *b) {
                best = Some((comb.clone(), v));
            }
        }
        // next combination in lexicographic order
        let mut i = s;
        while i > 0 && comb[i - 1] == p - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        comb[i - 1] += 1;
        for k in i..s {
            comb[k] = comb[k - 1] + 1;
        }
    }
    let (set, _) = best.ok_or(Error::SingularGram {
        position: 0,
        pivot: 0.0,
        threshold: tol.to_f64_lossy(),
    })?;
    evaluate_subset(prob.cov, prob.target, &set)
}

/// Dispatches on `method`.
pub fn solve<F: Real>(prob: &SubsetProblem<'_, F>, method: &SearchMethod) -> Result<SubsetSolution<F>> {
    match *method {
        SearchMethod::TwoStep {
            screen_size,
            node_budget,
        } => two_step_with(prob, screen_size.max(prob.s), node_budget),
        SearchMethod::Exhaustive => exhaustive(prob),
        SearchMethod::Forward => {
            if prob.s == 1 {
                return best_single(prob);
            }
            let path = forward_path(prob, prob.s);
            if path.selected.is_empty() {
                return best_single(prob);
            }
            let mut sol = evaluate_subset(prob.cov, prob.target, &path.selected)?;
            sol.stalled = path.selected.len() < prob.s;
            Ok(sol)
        }
    }
}
