//! Discrete entropic optimal transport between 2D point clouds.

use nalgebra::Matrix2;

use crate::{PotError, Result, Vec2};

/// Dense `rows × cols` matrix of nonnegative transport costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(PotError::Shape(format!("{} values for a {rows}x{cols} cost matrix", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PotError::InvalidArgument(format!("cost entry {v} is not a finite nonnegative value")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds a constant to every entry.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::from_rows(self.rows, self.cols, self.values.iter().map(|v| v + c).collect())
    }
}

/// Squared Euclidean costs `‖s_i - t_j‖²`.
pub fn cost_matrix(source: &[Vec2], target: &[Vec2]) -> Result<CostMatrix> {
    if source.is_empty() || target.is_empty() {
        return Err(PotError::NoPoints);
    }
    let mut values = Vec::with_capacity(source.len() * target.len());
    for s in source {
        values.extend(target.iter().map(|t| (s - t).norm_squared()));
    }
    CostMatrix::from_rows(source.len(), target.len(), values)
}

/// Transport plan between two discrete measures, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    plan: Vec<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
}

impl Coupling {
    pub fn new(rows: usize, cols: usize, plan: Vec<f64>, row_marginal: Vec<f64>, col_marginal: Vec<f64>) -> Result<Self> {
        if plan.len() != rows * cols || row_marginal.len() != rows || col_marginal.len() != cols {
            return Err(PotError::Shape(format!("inconsistent {rows}x{cols} coupling")));
        }
        Ok(Self {
            rows,
            cols,
            plan,
            row_marginal,
            col_marginal,
        })
    }

    /// Coupling with uniform marginals from an explicit plan.
    pub fn with_uniform_marginals(rows: usize, cols: usize, plan: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, plan, uniform(rows), uniform(cols))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.plan[i * self.cols..(i + 1) * self.cols]
    }

    pub fn plan(&self) -> &[f64] {
        &self.plan
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (acc, p) in s.iter_mut().zip(self.row(i)) {
                *acc += p;
            }
        }
        s
    }

    /// `(‖row sums - a‖₁, ‖col sums - b‖₁)`
    pub fn marginal_violation(&self) -> (f64, f64) {
        (l1(&self.row_sums(), &self.row_marginal), l1(&self.col_sums(), &self.col_marginal))
    }

    /// Information entropy `-Σ P log P`.
    pub fn entropy(&self) -> f64 {
        -self.plan.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Uniform probability vector of length `n`.
pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Inverse entropic regularization strength.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the L1 marginal violation drops below this.
    pub marginal_tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            lambda: 50.0,
            max_iter: 1000,
            marginal_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOutput {
    pub coupling: Coupling,
    pub entropy: f64,
    /// Iterations spent at the target regularization.
    pub iterations: usize,
    /// Total iterations including the annealing stages.
    pub total_iterations: usize,
    pub violation: f64,
}

/// Annealing stages run at most this many iterations each.
const STAGE_ITERS: usize = 20;
/// Ratio between consecutive annealing temperatures.
const STAGE_DECAY: f64 = 0.25;
/// Scalings outside `[1/ABSORB, ABSORB]` are folded back into the potentials.
const ABSORB: f64 = 1e50;
/// Kernel row or column sums below this are treated as underflowed.
const TINY: f64 = 1e-250;

/// Dual potentials `f`, `g` plus multiplicative scalings `u`, `v` on the
/// stabilized Gibbs kernel `K_ij = exp((f_i + g_j - D_ij) / ε)`. The plan is
/// `u_i K_ij v_j`.
struct Scaling<'a> {
    d: &'a CostMatrix,
    a: &'a [f64],
    b: &'a [f64],
    f: Vec<f64>,
    g: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    k: Vec<f64>,
    kv: Vec<f64>,
    ktu: Vec<f64>,
    eps: f64,
}

impl<'a> Scaling<'a> {
    fn new(d: &'a CostMatrix, a: &'a [f64], b: &'a [f64]) -> Self {
        let (n, m) = (d.rows(), d.cols());
        Self {
            d,
            a,
            b,
            f: vec![0.0; n],
            g: vec![0.0; m],
            u: vec![1.0; n],
            v: vec![1.0; m],
            k: vec![0.0; n * m],
            kv: vec![0.0; n],
            ktu: vec![0.0; m],
            eps: 1.0,
        }
    }

    fn absorb(&mut self) {
        for (f, u) in self.f.iter_mut().zip(&mut self.u) {
            *f += self.eps * u.ln();
            *u = 1.0;
        }
        for (g, v) in self.g.iter_mut().zip(&mut self.v) {
            *g += self.eps * v.ln();
            *v = 1.0;
        }
    }

    fn rebuild_kernel(&mut self) {
        let m = self.d.cols();
        for i in 0..self.d.rows() {
            let row = self.d.row(i);
            let out = &mut self.k[i * m..(i + 1) * m];
            for j in 0..m {
                out[j] = ((self.f[i] + self.g[j] - row[j]) / self.eps).exp();
            }
        }
    }

    /// One log-domain row and column update; robust when the kernel underflows.
    fn log_step(&mut self) {
        let (n, m) = (self.d.rows(), self.d.cols());
        let eps = self.eps;
        let lse = |z: &mut dyn Iterator<Item = f64>, buf: &mut Vec<f64>| {
            buf.clear();
            buf.extend(z);
            let mx = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mx + buf.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
        };
        let mut buf = Vec::with_capacity(n.max(m));
        for i in 0..n {
            let row = self.d.row(i);
            let g = &self.g;
            let s = lse(&mut (0..m).map(|j| (g[j] - row[j]) / eps), &mut buf);
            self.f[i] = eps * (self.a[i].ln() - s);
        }
        for j in 0..m {
            let f = &self.f;
            let d = self.d;
            let s = lse(&mut (0..n).map(|i| (f[i] - d.get(i, j)) / eps), &mut buf);
            self.g[j] = eps * (self.b[j].ln() - s);
        }
    }

    /// Sets the temperature and rebuilds the kernel around the current potentials.
    fn set_eps(&mut self, eps: f64) {
        self.absorb();
        self.eps = eps;
        self.rebuild_kernel();
    }

    /// Runs up to `max_iter` scaling iterations, stopping once the row
    /// violation of the current plan is below `tol`. Columns are exact after
    /// every iteration. Returns `(violation, iterations)`.
    fn iterate(&mut self, max_iter: usize, tol: f64) -> Result<(f64, usize)> {
        let (n, m) = (self.d.rows(), self.d.cols());
        let mut iters = 0;
        loop {
            for i in 0..n {
                let row = &self.k[i * m..(i + 1) * m];
                self.kv[i] = row.iter().zip(&self.v).map(|(k, v)| k * v).sum();
            }
            if self.kv.iter().any(|s| !(*s > TINY)) {
                // the kernel has drifted too far from the potentials
                self.absorb();
                self.log_step();
                self.rebuild_kernel();
                continue;
            }
            let viol: f64 = (0..n).map(|i| (self.u[i] * self.kv[i] - self.a[i]).abs()).sum();
            if !viol.is_finite() {
                return Err(PotError::Numerical(format!("marginal violation became {viol} at iteration {iters}")));
            }
            if viol < tol || iters >= max_iter {
                return Ok((viol, iters));
            }
            for i in 0..n {
                self.u[i] = self.a[i] / self.kv[i];
            }
            self.ktu.iter_mut().for_each(|s| *s = 0.0);
            for i in 0..n {
                let ui = self.u[i];
                for (s, k) in self.ktu.iter_mut().zip(&self.k[i * m..(i + 1) * m]) {
                    *s += k * ui;
                }
            }
            if self.ktu.iter().any(|s| !(*s > TINY)) {
                self.absorb();
                self.log_step();
                self.rebuild_kernel();
                iters += 1;
                continue;
            }
            for j in 0..m {
                self.v[j] = self.b[j] / self.ktu[j];
            }
            iters += 1;
            let extreme = |x: &f64| !(*x < ABSORB && *x > 1.0 / ABSORB);
            if self.u.iter().any(extreme) || self.v.iter().any(extreme) {
                self.absorb();
                self.rebuild_kernel();
            }
        }
    }
}

/// Entropic OT plan `argmin ⟨P, D⟩ - λ⁻¹ r(P)` over couplings with the given marginals.
///
/// Sinkhorn scaling on a log-stabilized kernel: the dual potentials absorb
/// the scalings whenever these leave a safe range, so the iteration never
/// overflows. The potentials are warm-started by annealing the temperature
/// from the cost range down to `1/λ`; only iterations at `1/λ` count against
/// `max_iter`.
pub fn sinkhorn(d: &CostMatrix, cfg: &SinkhornConfig, a: &[f64], b: &[f64]) -> Result<SinkhornOutput> {
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(PotError::InvalidArgument(format!("lambda must be positive, got {}", cfg.lambda)));
    }
    check_marginal(a, d.rows(), "row")?;
    check_marginal(b, d.cols(), "column")?;
    let (n, m) = (d.rows(), d.cols());

    let eps_target = 1.0 / cfg.lambda;
    let (lo, hi) = d.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut eps = (hi - lo).max(eps_target);
    let mut total = 0usize;
    let mut s = Scaling::new(d, a, b);

    // annealing
    while eps > eps_target {
        s.set_eps(eps);
        total += s.iterate(STAGE_ITERS, 1e-3)?.1;
        eps = (eps * STAGE_DECAY).max(eps_target);
    }
    s.set_eps(eps_target);
    let (violation, iterations) = s.iterate(cfg.max_iter, cfg.marginal_tol)?;
    total += iterations;

    let eps = eps_target;
    let mut plan = Vec::with_capacity(n * m);
    let mut entropy = 0.0;
    for i in 0..n {
        let row = d.row(i);
        for j in 0..m {
            let log_p = (s.f[i] + s.g[j] - row[j]) / eps + s.u[i].ln() + s.v[j].ln();
            let p = log_p.exp();
            if !p.is_finite() {
                return Err(PotError::Numerical(format!("plan entry ({i}, {j}) overflowed")));
            }
            if p > 0.0 {
                entropy -= p * log_p;
            }
            plan.push(p);
        }
    }
    let coupling = Coupling::new(n, m, plan, a.to_vec(), b.to_vec())?;
    if violation >= cfg.marginal_tol {
        return Err(PotError::NotConverged {
            iterations,
            violation,
            best: Box::new(coupling),
        });
    }
    Ok(SinkhornOutput {
        coupling,
        entropy,
        iterations,
        total_iterations: total,
        violation,
    })
}

fn check_marginal(w: &[f64], n: usize, what: &str) -> Result<()> {
    if w.len() != n {
        return Err(PotError::Shape(format!("{what} marginal has length {}, expected {n}", w.len())));
    }
    if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(PotError::InvalidArgument(format!("{what} marginal must be strictly positive")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(PotError::InvalidArgument(format!("{what} marginal sums to {s}")));
    }
    Ok(())
}

/// `Σ_ij P_ij D_ij`
pub fn transport_cost(p: &Coupling, d: &CostMatrix) -> Result<f64> {
    if p.rows() != d.rows() || p.cols() != d.cols() {
        return Err(PotError::Shape(format!(
            "plan is {}x{}, cost is {}x{}",
            p.rows(),
            p.cols(),
            d.rows(),
            d.cols()
        )));
    }
    Ok(p.plan().iter().zip(d.values()).map(|(p, c)| p * c).sum())
}

pub fn rotation(alpha: f64) -> Matrix2<f64> {
    let (s, c) = alpha.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Rotates points by `alpha` about `pivot`.
pub fn rotate_points(points: &[Vec2], alpha: f64, pivot: Vec2) -> Vec<Vec2> {
    let r = rotation(alpha);
    points.iter().map(|p| r * (p - pivot) + pivot).collect()
}

pub fn centroid(points: &[Vec2]) -> Vec2 {
    if points.is_empty() {
        return Vec2::zeros();
    }
    points.iter().sum::<Vec2>() / points.len() as f64
}

/// Affine map `x ↦ A x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2D {
    pub linear: Matrix2<f64>,
    pub offset: Vec2,
}

impl Affine2D {
    pub fn identity() -> Self {
        Self {
            linear: Matrix2::identity(),
            offset: Vec2::zeros(),
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.linear * p + self.offset
    }
}

/// Affine map minimizing `Σ_ij P_ij ‖A s_i + t - t_j‖² + ridge ‖A - I‖²_F`.
///
/// Reduces to weighted least squares from each source point to its
/// barycentric image `Σ_j P_ij t_j / Σ_j P_ij`.
pub fn fit_linear_map(p: &Coupling, source: &[Vec2], target: &[Vec2], ridge: f64) -> Result<Affine2D> {
    if p.rows() != source.len() || p.cols() != target.len() {
        return Err(PotError::Shape(format!(
            "plan is {}x{} but clouds have {} and {} points",
            p.rows(),
            p.cols(),
            source.len(),
            target.len()
        )));
    }
    if ridge < 0.0 {
        return Err(PotError::InvalidArgument("ridge must be nonnegative".into()));
    }
    let mut weights = Vec::with_capacity(source.len());
    let mut images = Vec::with_capacity(source.len());
    for i in 0..p.rows() {
        let row = p.row(i);
        let w: f64 = row.iter().sum();
        let img = if w > 0.0 {
            row.iter().zip(target).map(|(pij, t)| *pij * t).sum::<Vec2>() / w
        } else {
            Vec2::zeros()
        };
        weights.push(w);
        images.push(img);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(PotError::Numerical("coupling has no mass".into()));
    }
    let xm = source.iter().zip(&weights).map(|(x, w)| *w * x).sum::<Vec2>() / total;
    let ym = images.iter().zip(&weights).map(|(y, w)| *w * y).sum::<Vec2>() / total;
    let mut cxx = Matrix2::zeros();
    let mut cyx = Matrix2::zeros();
    for ((x, y), w) in source.iter().zip(&images).zip(&weights) {
        let dx = x - xm;
        let dy = y - ym;
        cxx += *w * dx * dx.transpose();
        cyx += *w * dy * dx.transpose();
    }
    let eye = Matrix2::identity();
    let lhs = cxx + ridge * eye;
    let scale = cxx.trace().abs().max(f64::MIN_POSITIVE);
    if ridge == 0.0 && lhs.determinant().abs() <= 1e-12 * scale * scale {
        return Err(PotError::RankDeficient);
    }
    let inv = lhs.try_inverse().ok_or(PotError::RankDeficient)?;
    let linear = (cyx + ridge * eye) * inv;
    Ok(Affine2D {
        linear,
        offset: ym - linear * xm,
    })
}
