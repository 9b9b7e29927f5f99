//! Scalar quantities of interest computed from a [`MixedSolution`].

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{EdgeTag, Mesh};
use crate::mfem::MixedSolution;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QoiKind {
    VelocityL2,
    VelocityHdiv,
    PressureL2,
    RecoveredPressureL2,
    KEff,
    TravelTime { x0: [f64; 2] },
}

impl QoiKind {
    pub fn name(&self) -> &'static str {
        match self {
            QoiKind::VelocityL2 => "velocity_l2",
            QoiKind::VelocityHdiv => "velocity_hdiv",
            QoiKind::PressureL2 => "pressure_l2",
            QoiKind::RecoveredPressureL2 => "recovered_pressure_l2",
            QoiKind::KEff => "k_eff",
            QoiKind::TravelTime { .. } => "travel_time",
        }
    }

    pub fn evaluate(&self, mesh: &Mesh, solution: &MixedSolution) -> Result<f64> {
        Ok(match *self {
            QoiKind::VelocityL2 => velocity_norms(mesh, solution).0,
            QoiKind::VelocityHdiv => velocity_norms(mesh, solution).1,
            QoiKind::PressureL2 => pressure_norms(mesh, solution).0,
            QoiKind::RecoveredPressureL2 => pressure_norms(mesh, solution).1,
            QoiKind::KEff => effective_permeability(mesh, solution),
            QoiKind::TravelTime { x0 } => {
                let track = travel_time(mesh, solution, x0)?;
                match track.termination {
                    Termination::Exited => track.travel_time,
                    Termination::Stagnated => return Err(Error::TrackIncomplete("stagnated")),
                    Termination::MaxSteps => return Err(Error::TrackIncomplete("step limit reached")),
                }
            }
        })
    }
}

impl fmt::Display for QoiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QoiKind::TravelTime { x0 } => write!(f, "travel_time({},{})", x0[0], x0[1]),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for QoiKind {
    type Err = Error;

    /// Accepts the names from [`QoiKind::name`]; `travel_time` defaults to
    /// `x0 = (0, 0.5)` and also takes the form `travel_time(x,y)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "velocity_l2" => QoiKind::VelocityL2,
            "velocity_hdiv" => QoiKind::VelocityHdiv,
            "pressure_l2" => QoiKind::PressureL2,
            "recovered_pressure_l2" => QoiKind::RecoveredPressureL2,
            "k_eff" => QoiKind::KEff,
            "travel_time" => QoiKind::TravelTime { x0: [0.0, 0.5] },
            _ => {
                let inner = s
                    .strip_prefix("travel_time(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::invalid(format!("unknown quantity of interest '{s}'")))?;
                let parts: Vec<f64> = inner
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::invalid(format!("bad travel_time start point '{inner}'")))?;
                if parts.len() != 2 || parts.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::invalid(format!("travel_time start point must lie in [0,1]^2, got '{inner}'")));
                }
                QoiKind::TravelTime { x0: [parts[0], parts[1]] }
            }
        })
    }
}

/// Coefficients `c_i` of `q_h = sum_i c_i (x - P_i)` on element `t`.
fn velocity_coefficients(mesh: &Mesh, solution: &MixedSolution, t: usize) -> [f64; 3] {
    let edges = mesh.element_edges(t);
    let signs = mesh.element_signs(t);
    let area = mesh.area(t);
    std::array::from_fn(|i| signs[i] * solution.edge_flux[edges[i]] / (2.0 * area))
}

/// `(||q_h||_{L^2}, ||q_h||_{H(div)})`, integrated exactly.
pub fn velocity_norms(mesh: &Mesh, solution: &MixedSolution) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut div2 = 0.0;
    for t in 0..mesh.num_elements() {
        let c = velocity_coefficients(mesh, solution, t);
        let p = mesh.element_vertices(t);
        let area = mesh.area(t);
        let q = |x: [f64; 2]| {
            let mut v = [0.0; 2];
            for i in 0..3 {
                v[0] += c[i] * (x[0] - p[i][0]);
                v[1] += c[i] * (x[1] - p[i][1]);
            }
            v[0] * v[0] + v[1] * v[1]
        };
        // Edge-midpoint rule, exact for the quadratic |q_h|^2.
        let mid = |a: usize, b: usize| [(p[a][0] + p[b][0]) / 2.0, (p[a][1] + p[b][1]) / 2.0];
        l2 += area / 3.0 * (q(mid(1, 2)) + q(mid(0, 2)) + q(mid(0, 1)));
        let div = 2.0 * (c[0] + c[1] + c[2]);
        div2 += div * div * area;
    }
    (l2.sqrt(), (l2 + div2).sqrt())
}

/// `(||u_h||_{L^2}, ||u~_h||_{L^2})` for the P0 and recovered pressures.
pub fn pressure_norms(mesh: &Mesh, solution: &MixedSolution) -> (f64, f64) {
    let mut p0 = 0.0;
    let mut cr = 0.0;
    for t in 0..mesh.num_elements() {
        let area = mesh.area(t);
        p0 += solution.pressure[t] * solution.pressure[t] * area;
        cr += area / 3.0 * solution.recovered_pressure[t].iter().map(|v| v * v).sum::<f64>();
    }
    (p0.sqrt(), cr.sqrt())
}

/// `k_eff = ∫_D (q_h)_1 dx`.
pub fn effective_permeability(mesh: &Mesh, solution: &MixedSolution) -> f64 {
    let mut k = 0.0;
    for t in 0..mesh.num_elements() {
        let c = velocity_coefficients(mesh, solution, t);
        let p = mesh.element_vertices(t);
        let centroid = mesh.centroid(t);
        let area = mesh.area(t);
        k += (0..3).map(|i| c[i] * (centroid[0] - p[i][0])).sum::<f64>() * area;
    }
    k
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Exited,
    Stagnated,
    MaxSteps,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Exited => "exited",
            Termination::Stagnated => "stagnated",
            Termination::MaxSteps => "max_steps",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackStep {
    pub element: usize,
    pub entry: [f64; 2],
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackResult {
    pub travel_time: f64,
    /// Last position reached; the exit point when the particle left `D`.
    pub exit: [f64; 2],
    pub path: Vec<TrackStep>,
    pub termination: Termination,
}

impl TrackResult {
    /// CSV dump `step,element,x,y,t` with `t` the time at element entry; the
    /// final row (element `-1`) is the exit point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,element,x,y,t")?;
        let mut t = 0.0;
        for (k, s) in self.path.iter().enumerate() {
            writeln!(w, "{k},{},{},{},{t}", s.element, s.entry[0], s.entry[1])?;
            t += s.dt;
        }
        writeln!(w, "{},-1,{},{},{}", self.path.len(), self.exit[0], self.exit[1], self.travel_time)
    }
}

/// Options for [`travel_time_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackOptions {
    /// Defaults to `100 n^2`.
    pub max_steps: Option<usize>,
}

pub fn travel_time(mesh: &Mesh, solution: &MixedSolution, x0: [f64; 2]) -> Result<TrackResult> {
    travel_time_with(mesh, solution, x0, TrackOptions { max_steps: None })
}

/// Local velocity `v(x) = beta x + alpha` on one element.
#[derive(Clone, Copy, Debug)]
struct Affine {
    beta: f64,
    alpha: [f64; 2],
}

impl Affine {
    fn new(mesh: &Mesh, solution: &MixedSolution, t: usize) -> Self {
        let c = velocity_coefficients(mesh, solution, t);
        let p = mesh.element_vertices(t);
        let beta = c.iter().sum();
        let alpha = [
            -(0..3).map(|i| c[i] * p[i][0]).sum::<f64>(),
            -(0..3).map(|i| c[i] * p[i][1]).sum::<f64>(),
        ];
        Affine { beta, alpha }
    }

    fn at(&self, x: [f64; 2]) -> [f64; 2] {
        [self.beta * x[0] + self.alpha[0], self.beta * x[1] + self.alpha[1]]
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Outward unit normal and midpoint of local edge `i` (opposite vertex `i`).
fn local_edge(p: &[[f64; 2]; 3], i: usize) -> ([f64; 2], [f64; 2]) {
    let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = norm(d);
    // Counterclockwise elements: the outward normal is the edge direction turned clockwise.
    let n = [d[1] / len, -d[0] / len];
    (n, [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0])
}

/// Among elements containing `x`, the one the velocity points into most
/// directly; ties go to the lowest index.
fn choose_element(mesh: &Mesh, solution: &MixedSolution, x: [f64; 2], v_tol: f64) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for t in mesh.elements_containing(x)? {
        let v = Affine::new(mesh, solution, t).at(x);
        let speed = norm(v);
        if speed < v_tol {
            continue;
        }
        let eps = 1e-6 * mesh.h() / speed;
        let b = mesh.barycentric(t, [x[0] + eps * v[0], x[1] + eps * v[1]]);
        let score = b.iter().copied().fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, s)| score > s + 1e-14) {
            best = Some((t, score));
        }
    }
    Ok(best.map(|(t, _)| t))
}

/// Tracks a particle from `x0` through `q_h`, integrating the piecewise
/// affine velocity exactly in each element.
pub fn travel_time_with(mesh: &Mesh, solution: &MixedSolution, x0: [f64; 2], opts: TrackOptions) -> Result<TrackResult> {
    let h = mesh.h();
    let max_steps = opts.max_steps.unwrap_or(100 * mesh.n() * mesh.n());
    let flux_scale = (0..mesh.num_edges())
        .map(|e| solution.edge_flux[e].abs() / mesh.edge_length(e))
        .fold(0.0, f64::max);
    let v_tol = 1e-13 * flux_scale;
    // Normal speeds below this count as tangential motion.
    let v_cand = 1e-10 * flux_scale;

    let done = |x: [f64; 2], tau: f64, path: Vec<TrackStep>, termination| {
        Ok(TrackResult { travel_time: tau, exit: x, path, termination })
    };

    let mut x = x0;
    mesh.elements_containing(x)?;
    if x[0] >= 1.0 - crate::mesh::LOCATE_TOL {
        return done(x, 0.0, Vec::new(), Termination::Exited);
    }
    let Some(mut t) = choose_element(mesh, solution, x, v_tol)? else {
        return done(x, 0.0, Vec::new(), Termination::Stagnated);
    };
    let mut tau = 0.0;
    let mut path = Vec::new();

    for _ in 0..max_steps {
        let field = Affine::new(mesh, solution, t);
        let v0 = field.at(x);
        if norm(v0) < v_tol {
            return done(x, tau, path, Termination::Stagnated);
        }
        let p = mesh.element_vertices(t);
        let edges = mesh.element_edges(t);
        let signs = mesh.element_signs(t);
        let beta = field.beta;
        let linear = beta.abs() < 1e-12 * (norm(field.alpha) / h + beta.abs());

        let exit_time = |i: usize, threshold: f64| -> Option<f64> {
            let v_edge = signs[i] * solution.edge_flux[edges[i]] / mesh.edge_length(edges[i]);
            let (n, m) = local_edge(&p, i);
            let vn0 = v0[0] * n[0] + v0[1] * n[1];
            if v_edge <= threshold || vn0 <= threshold {
                return None;
            }
            let delta = ((m[0] - x[0]) * n[0] + (m[1] - x[1]) * n[1]).max(0.0);
            Some(if linear { delta / vn0 } else { (beta * delta / vn0).ln_1p() / beta })
        };
        let pick = |threshold: f64| {
            (0..3)
                .filter_map(|i| exit_time(i, threshold).map(|dt| (i, dt)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
        };
        let Some((i, dt)) = pick(v_cand).or_else(|| pick(0.0)) else {
            return done(x, tau, path, Termination::Stagnated);
        };

        let scale = if linear { dt } else { (beta * dt).exp_m1() / beta };
        let mut y = [x[0] + v0[0] * scale, x[1] + v0[1] * scale];
        let (n, m) = local_edge(&p, i);
        let off = (y[0] - m[0]) * n[0] + (y[1] - m[1]) * n[1];
        y = [y[0] - off * n[0], y[1] - off * n[1]];

        path.push(TrackStep { element: t, entry: x, dt });
        tau += dt;
        x = y;

        let e = edges[i];
        if mesh.edge_tag(e) != EdgeTag::Interior {
            return done(x, tau, path, Termination::Exited);
        }
        if p.iter().any(|q| (q[0] - x[0]).hypot(q[1] - x[1]) < 1e-12) {
            let v = field.at(x);
            let speed = norm(v);
            if speed < v_tol {
                return done(x, tau, path, Termination::Stagnated);
            }
            let nudge = 1e-10 * h;
            let z = [x[0] + nudge * v[0] / speed, x[1] + nudge * v[1] / speed];
            if z[0] > 1.0 {
                return done(x, tau, path, Termination::Exited);
            }
            tau += nudge / speed;
            x = [z[0].clamp(0.0, 1.0), z[1].clamp(0.0, 1.0)];
            match choose_element(mesh, solution, x, v_tol)? {
                Some(next) => t = next,
                None => return done(x, tau, path, Termination::Stagnated),
            }
            continue;
        }
        let [a, b] = mesh.edge_elements(e);
        let other = if a == Some(t) { b } else { a };
        t = other.expect("interior edge has two elements");
    }
    done(x, tau, path, Termination::MaxSteps)
}
