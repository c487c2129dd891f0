//! Transfer of canonical paths from an easy chain to a hard one that agrees
//! with it outside a low-measure set, yielding two-leg flows on a large good
//! set.
//!
//! Convention: `Omega_theta = {x : theta pi(x) < pi~(x)}` with `theta >= 1`,
//! so that `pi~(v) <= theta pi(v)` off `Omega_theta` and
//! `Q~(e) <= theta R Q(e)` for edges not touching it.
//!
//! The second leg of a two-leg flow is `gamma~_yr` reversed, which avoids
//! `E_theta` exactly when `(y, r)` is a good pair. For paths that are not
//! reverses of each other (fixed update orders) this differs from
//! `gamma~_ry`.

use serde::{Deserialize, Serialize};

use super::paths::{congestion, summarise, CanonicalPathSet, Path, Reference, Routing};
use super::ExplicitChain;
use crate::error::{Result, SqaError};

/// `lhs <= rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        InequalityCheck {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs + slack,
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSummary {
    /// Ordered pairs `x != y` in `Omega_G`.
    pub pairs: usize,
    /// Pairs whose intermediate set is empty.
    pub undefined_pairs: usize,
    pub max_weight_error: f64,
    /// Legs with positive weight that touch `E_theta`.
    pub legs_touching_e_theta: usize,
    pub max_path_length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: f64,
    pub theta: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub omega_theta: Vec<usize>,
    pub omega_b: Vec<usize>,
    pub omega_g: Vec<usize>,
    pub pi_tilde_omega_theta: f64,
    pub pi_omega_theta: f64,
    pub q_tilde_e_theta: f64,
    pub pi_tilde_omega_b: f64,
    pub pi_omega_g: f64,
    /// `3 a^2 rho~ pi~(Omega_theta)`.
    pub feasibility: f64,
    pub rho_tilde: f64,
    /// Max over every loaded edge.
    pub rho: f64,
    pub rho_internal: f64,
    pub rho_boundary: f64,
    pub rho_external: f64,
    /// `16 theta R a^2 rho~`.
    pub congestion_bound: f64,
    pub min_good_neighbourhood: f64,
    pub min_intermediate_mass: f64,
    pub flow: FlowSummary,
    pub checks: Vec<InequalityCheck>,
}

impl ComparisonReport {
    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| !c.holds).collect()
    }

    pub fn good_mask(&self, states: usize) -> Vec<bool> {
        let mut m = vec![false; states];
        self.omega_g.iter().for_each(|&x| m[x] = true);
        m
    }
}

/// Tolerance used for every inequality in the report.
pub const CHECK_SLACK: f64 = 1e-10;

struct Setup {
    n: usize,
    a: f64,
    r: f64,
    in_theta: Vec<bool>,
    in_good: Vec<bool>,
    /// `(x, y)` in `C_G`.
    good_pair: Vec<bool>,
    len: Vec<usize>,
    rho_tilde: f64,
    checks: Vec<InequalityCheck>,
    report_parts: ReportParts,
}

struct ReportParts {
    pi_tilde_theta: f64,
    pi_theta: f64,
    q_tilde_e_theta: f64,
    pi_tilde_b: f64,
    pi_g: f64,
    feasibility: f64,
}

fn touches(path: &Path, in_theta: &[bool]) -> bool {
    path.moves().any(|(v, w)| in_theta[v] || in_theta[w])
}

fn setup(easy: &ExplicitChain, easy_paths: &CanonicalPathSet, hard: &ExplicitChain, theta: f64) -> Result<Setup> {
    let n = easy.len();
    if hard.len() != n {
        return Err(SqaError::LengthMismatch { expected: n, actual: hard.len() });
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(SqaError::param("theta", format!("must be positive and finite, got {theta}")));
    }
    let (pt, p) = (easy.pi(), hard.pi());
    let a = p.iter().zip(pt).map(|(x, y)| x / y).fold(0.0, f64::max);
    if !a.is_finite() {
        return Err(SqaError::param("a", "max pi/pi~ is not finite"));
    }
    let tilde = congestion(easy, easy_paths, Reference::CompleteGraph)?;
    let rho_tilde = tilde.rho;
    for x in 0..n {
        for y in 0..n {
            if easy_paths.path(x, y).is_none() {
                return Err(SqaError::InvalidPath {
                    from: x,
                    to: y,
                    reason: "easy chain needs one path per ordered pair".into(),
                });
            }
        }
    }
    let in_theta: Vec<bool> = (0..n).map(|x| theta * p[x] < pt[x]).collect();
    let pi_tilde_theta: f64 = (0..n).filter(|&x| in_theta[x]).map(|x| pt[x]).sum();
    let pi_theta: f64 = (0..n).filter(|&x| in_theta[x]).map(|x| p[x]).sum();

    // undirected edges (self-loops included) incident on Omega_theta
    let mut q_tilde_e_theta = 0.0;
    for v in 0..n {
        for w in v..n {
            if (in_theta[v] || in_theta[w]) && easy.p()[(v, w)] > 0.0 {
                q_tilde_e_theta += easy.q(v, w);
            }
        }
    }

    let mut r = 0.0f64;
    for v in 0..n {
        for &w in easy.neighbours(v) {
            if in_theta[v] || in_theta[w] {
                continue;
            }
            let ph = hard.p()[(v, w)];
            r = r.max(if ph > 0.0 { easy.p()[(v, w)] / ph } else { f64::INFINITY });
        }
    }

    let mut good_pair = vec![false; n * n];
    let mut len = vec![0usize; n * n];
    let mut bad_sum = 0.0;
    let mut bad_mass = vec![0.0; n];
    for x in 0..n {
        for y in 0..n {
            let path = easy_paths.path(x, y).unwrap();
            len[x * n + y] = path.len();
            if touches(path, &in_theta) {
                bad_sum += pt[x] * pt[y] * path.len() as f64;
                bad_mass[x] += pt[y];
            } else {
                good_pair[x * n + y] = true;
            }
        }
    }
    let in_good: Vec<bool> = (0..n).map(|x| bad_mass[x] < 1.0 / (3.0 * a)).collect();
    let pi_tilde_b: f64 = (0..n).filter(|&x| !in_good[x]).map(|x| pt[x]).sum();
    let pi_g: f64 = (0..n).filter(|&x| in_good[x]).map(|x| p[x]).sum();
    let feasibility = 3.0 * a * a * rho_tilde * pi_tilde_theta;
    if feasibility >= 1.0 {
        return Err(SqaError::Infeasible(format!(
            "3 a^2 rho~ pi~(Omega_theta) = {feasibility:.6} >= 1 (a = {a:.6}, rho~ = {rho_tilde:.6}, pi~(Omega_theta) = {pi_tilde_theta:.3e})"
        )));
    }

    let mut q_ratio = 0.0f64;
    for v in 0..n {
        for &w in easy.neighbours(v) {
            if in_theta[v] || in_theta[w] {
                continue;
            }
            q_ratio = q_ratio.max(easy.q(v, w) / (theta * r * hard.q(v, w)));
        }
    }

    let s = CHECK_SLACK;
    let checks = vec![
        InequalityCheck::new("q_tilde_e_theta_upper", q_tilde_e_theta, pi_tilde_theta, s),
        InequalityCheck::new("q_tilde_e_theta_lower", 0.5 * pi_tilde_theta, q_tilde_e_theta, s),
        InequalityCheck::new("q_comparison", q_ratio, 1.0, s),
        InequalityCheck::new("not_so_bad", bad_sum, rho_tilde * pi_tilde_theta, s),
        InequalityCheck::new("omega_b_measure", pi_tilde_b, 3.0 * a * rho_tilde * pi_tilde_theta, s),
        InequalityCheck::new("theta_to_bee", 1.0 - feasibility, pi_g, s),
        InequalityCheck::new("eleven_twelfths", 11.0 / 12.0, pi_g, s),
    ];
    Ok(Setup {
        n,
        a,
        r,
        in_theta,
        in_good,
        good_pair,
        len,
        rho_tilde,
        checks,
        report_parts: ReportParts {
            pi_tilde_theta,
            pi_theta,
            q_tilde_e_theta,
            pi_tilde_b,
            pi_g,
            feasibility,
        },
    })
}

impl Setup {
    fn intermediate(&self, x: usize, r: usize, y: usize) -> bool {
        let n = self.n;
        self.in_good[r] && self.good_pair[x * n + r] && self.good_pair[y * n + r]
    }
}

/// Runs the construction and measures the congestion of the two-leg flows on
/// the hard chain. The flows are never materialised; see [`two_leg_flow`].
pub fn most_paths_comparison(
    easy: &ExplicitChain,
    easy_paths: &CanonicalPathSet,
    hard: &ExplicitChain,
    theta: f64,
) -> Result<ComparisonReport> {
    let st = setup(easy, easy_paths, hard, theta)?;
    let n = st.n;
    let p = hard.pi();
    let good: Vec<usize> = (0..n).filter(|&x| st.in_good[x]).collect();

    let mut min_nb = f64::INFINITY;
    for &x in &good {
        let m: f64 = (0..n).filter(|&y| st.good_pair[x * n + y]).map(|y| p[y]).sum();
        min_nb = min_nb.min(m);
    }

    // per source x and per target y: sum of pair weights through r, and the
    // same weighted by the other leg's length
    let mut alpha = vec![0.0; n * n];
    let mut beta = vec![0.0; n * n];
    let mut alpha_in = vec![0.0; n * n];
    let mut beta_in = vec![0.0; n * n];
    let mut flow = FlowSummary {
        pairs: 0,
        undefined_pairs: 0,
        max_weight_error: 0.0,
        legs_touching_e_theta: 0,
        max_path_length: 0,
    };
    let mut min_mass = f64::INFINITY;
    for &x in &good {
        for &y in &good {
            if x == y {
                continue;
            }
            flow.pairs += 1;
            let mass: f64 = good.iter().filter(|&&r| st.intermediate(x, r, y)).map(|&r| p[r]).sum();
            min_mass = min_mass.min(mass);
            if mass <= 0.0 {
                flow.undefined_pairs += 1;
                continue;
            }
            let w = p[x] * p[y] / mass;
            let mut total = 0.0;
            for &r in &good {
                if !st.intermediate(x, r, y) {
                    continue;
                }
                total += p[r] / mass;
                let (l1, l2) = (st.len[x * n + r], st.len[y * n + r]);
                flow.max_path_length = flow.max_path_length.max(l1 + l2);
                alpha[x * n + r] += w;
                beta[x * n + r] += w * l2 as f64;
                alpha_in[y * n + r] += w;
                beta_in[y * n + r] += w * l1 as f64;
            }
            flow.max_weight_error = flow.max_weight_error.max((total - 1.0).abs());
        }
    }

    let index = hard.edge_index();
    let mut load = vec![0.0; index.len()];
    let mut add_leg = |path: &Path, c: f64, flow: &mut FlowSummary| -> Result<()> {
        if touches(path, &st.in_theta) {
            flow.legs_touching_e_theta += 1;
        }
        for (v, w) in path.moves() {
            let e = index.id(v, w).ok_or_else(|| SqaError::InvalidPath {
                from: path.from(),
                to: path.to(),
                reason: format!("step {v} -> {w} has zero probability in the hard chain"),
            })?;
            load[e] += c;
        }
        Ok(())
    };
    for &x in &good {
        for r in 0..n {
            let al = alpha[x * n + r];
            if al > 0.0 {
                let c = p[r] * (st.len[x * n + r] as f64 * al + beta[x * n + r]);
                add_leg(easy_paths.path(x, r).unwrap(), c, &mut flow)?;
            }
        }
    }
    for &y in &good {
        for r in 0..n {
            let al = alpha_in[y * n + r];
            if al > 0.0 {
                let c = p[r] * (st.len[y * n + r] as f64 * al + beta_in[y * n + r]);
                add_leg(&easy_paths.path(y, r).unwrap().reversed(), c, &mut flow)?;
            }
        }
    }

    let measured = summarise(hard, &load, flow.pairs - flow.undefined_pairs);
    let (mut internal, mut boundary, mut external) = (0.0f64, 0.0f64, 0.0f64);
    for e in &measured.edges {
        let slot = match (st.in_good[e.from], st.in_good[e.to]) {
            (true, true) => &mut internal,
            (false, false) => &mut external,
            _ => &mut boundary,
        };
        *slot = slot.max(e.rho);
    }
    let bound = 16.0 * theta * st.r * st.a * st.a * st.rho_tilde;
    let s = CHECK_SLACK;
    let mut checks = st.checks.clone();
    let min_mass = if flow.pairs == 0 { 1.0 } else { min_mass };
    let min_nb = if good.is_empty() { 0.0 } else { min_nb };
    checks.extend([
        InequalityCheck::new("good_neighbourhood", 2.0 / 3.0, min_nb, s),
        InequalityCheck::new("intermediate_mass", 0.25, min_mass, s),
        InequalityCheck::new("flow_defined", flow.undefined_pairs as f64, 0.0, 0.0),
        InequalityCheck::new("flow_weights", flow.max_weight_error, s, 0.0),
        InequalityCheck::new("flow_avoids_e_theta", flow.legs_touching_e_theta as f64, 0.0, 0.0),
        InequalityCheck::new("good_congestion", measured.rho, bound, s * bound.max(1.0)),
    ]);
    let parts = &st.report_parts;
    let members = |m: &dyn Fn(usize) -> bool| (0..n).filter(|&x| m(x)).collect::<Vec<_>>();
    Ok(ComparisonReport {
        a: st.a,
        theta,
        r: st.r,
        omega_theta: members(&|x| st.in_theta[x]),
        omega_b: members(&|x| !st.in_good[x]),
        omega_g: good.clone(),
        pi_tilde_omega_theta: parts.pi_tilde_theta,
        pi_omega_theta: parts.pi_theta,
        q_tilde_e_theta: parts.q_tilde_e_theta,
        pi_tilde_omega_b: parts.pi_tilde_b,
        pi_omega_g: parts.pi_g,
        feasibility: parts.feasibility,
        rho_tilde: st.rho_tilde,
        rho: measured.rho,
        rho_internal: internal,
        rho_boundary: boundary,
        rho_external: external,
        congestion_bound: bound,
        min_good_neighbourhood: min_nb,
        min_intermediate_mass: min_mass,
        flow,
        checks,
    })
}

/// The two-leg flows as explicit weighted path lists on `Omega_G`: for
/// `x != y`, `r ~ pi` restricted to `C_G(x) & C_G(y) & Omega_G`, path
/// `gamma~_xr` then `gamma~_yr` walked backwards. Diagonal pairs get the
/// trivial path.
pub fn two_leg_flow(
    easy: &ExplicitChain,
    easy_paths: &CanonicalPathSet,
    hard: &ExplicitChain,
    theta: f64,
) -> Result<CanonicalPathSet> {
    let st = setup(easy, easy_paths, hard, theta)?;
    let n = st.n;
    let p = hard.pi();
    let mut set = CanonicalPathSet::new(n);
    for x in (0..n).filter(|&x| st.in_good[x]) {
        for y in (0..n).filter(|&y| st.in_good[y]) {
            if x == y {
                set.set(x, x, Routing::Single(Path::trivial(x)));
                continue;
            }
            let rs: Vec<usize> = (0..n).filter(|&r| st.intermediate(x, r, y)).collect();
            let mass: f64 = rs.iter().map(|&r| p[r]).sum();
            if rs.is_empty() {
                return Err(SqaError::Infeasible(format!("no intermediate state for pair ({x}, {y})")));
            }
            let list = rs
                .iter()
                .map(|&r| {
                    let path = easy_paths.path(x, r).unwrap().concat(&easy_paths.path(y, r).unwrap().reversed())?;
                    Ok((p[r] / mass, path))
                })
                .collect::<Result<Vec<_>>>()?;
            set.set(x, y, Routing::Flow(list));
        }
    }
    Ok(set)
}
