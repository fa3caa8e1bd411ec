//! Training data: generators for the synthetic teacher datasets, power-law
//! spectrum constructions, second-moment statistics, CSV ingestion, and
//! structured weight initializations.

use crate::error::{CoreError, Result};
use crate::linalg::random_orthogonal;
use crate::net::{ActivationKind, SampleInput, UnitLayerNet, UnitParams, CONV_KERNEL, CONV_STRIDE};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// A supervised training set of P samples.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub inputs: Vec<SampleInput>,
    pub targets: Vec<DVector<f64>>,
    pub kind: String,
}

impl Dataset {
    pub fn from_vectors(inputs: Vec<DVector<f64>>, targets: Vec<DVector<f64>>, kind: &str) -> Self {
        Self {
            inputs: inputs.into_iter().map(SampleInput::Vector).collect(),
            targets,
            kind: kind.to_string(),
        }
    }

    pub fn from_tokens(inputs: Vec<DMatrix<f64>>, targets: Vec<f64>, kind: &str) -> Self {
        Self {
            inputs: inputs.into_iter().map(SampleInput::Tokens).collect(),
            targets: targets
                .into_iter()
                .map(|y| DVector::from_element(1, y))
                .collect(),
            kind: kind.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SampleInput, &DVector<f64>)> {
        self.inputs.iter().zip(self.targets.iter())
    }

    /// Write as CSV with columns x0..x{n-1}, y0..y{m-1}.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let (nx, ny) = match (&self.inputs[0], &self.targets[0]) {
            (SampleInput::Vector(x), y) => (x.len(), y.len()),
            _ => {
                return Err(CoreError::Unsupported(
                    "token datasets have no flat CSV form".into(),
                ))
            }
        };
        let mut header: Vec<String> = (0..nx).map(|i| format!("x{i}")).collect();
        header.extend((0..ny).map(|i| format!("y{i}")));
        writeln!(f, "{}", header.join(","))?;
        for (x, y) in self.iter() {
            let x = x.as_vector()?;
            let row: Vec<String> = x
                .iter()
                .chain(y.iter())
                .map(|v| format!("{v:.17e}"))
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Read a CSV with columns x0..x{n-1}, y0..y{m-1}.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let headers = rdr.headers()?.clone();
        let nx = headers.iter().filter(|h| h.starts_with('x')).count();
        let ny = headers.iter().filter(|h| h.starts_with('y')).count();
        if nx == 0 || ny == 0 || nx + ny != headers.len() {
            return Err(CoreError::InvalidInput(format!(
                "csv header must be x0..x{{n-1}},y0..y{{m-1}}, got {headers:?}"
            )));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let vals: std::result::Result<Vec<f64>, _> =
                record.iter().map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| CoreError::InvalidInput(format!("bad csv value: {e}")))?;
            if vals.len() != nx + ny {
                return Err(CoreError::InvalidInput("ragged csv row".into()));
            }
            inputs.push(DVector::from_column_slice(&vals[..nx]));
            targets.push(DVector::from_column_slice(&vals[nx..]));
        }
        if inputs.is_empty() {
            return Err(CoreError::InvalidInput("empty csv dataset".into()));
        }
        Ok(Dataset::from_vectors(inputs, targets, "csv"))
    }
}

/// Where statistics came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Empirical { p: usize },
    Prescribed,
}

/// Second-moment statistics driving the dynamics. The linear-case block
/// (Σ_yz, Σ_zz, Σ_yy) and the quadratic-case block (Σ_yZ, Σ_ZZ, E[y²]) are
/// filled as applicable to the activation kind.
#[derive(Clone, Debug)]
pub struct DataStats {
    /// Cross-moment Σ_yz (N_v × N_u); for conv kinds the feature matrix is
    /// the window-reshaped input.
    pub sigma_yz: Option<DMatrix<f64>>,
    /// Input second moment Σ_zz (raw-input moments for fc and conv kinds).
    pub sigma_zz: Option<DMatrix<f64>>,
    /// Target second moment, needed for stats-driven losses.
    pub sigma_yy: Option<DMatrix<f64>>,
    /// Symmetric quadratic-case cross-moment Σ_yZ.
    pub sigma_yzq: Option<DMatrix<f64>>,
    /// Quadratic second moment Σ_ZZ over vec(Z).
    pub sigma_zzq: Option<DMatrix<f64>>,
    /// E[y²] for scalar-target quadratic losses.
    pub y_sq: Option<f64>,
    pub provenance: Provenance,
}

impl DataStats {
    pub fn empty(provenance: Provenance) -> Self {
        Self {
            sigma_yz: None,
            sigma_zz: None,
            sigma_yy: None,
            sigma_yzq: None,
            sigma_zzq: None,
            y_sq: None,
            provenance,
        }
    }

    pub fn prescribed_linear(
        sigma_yz: DMatrix<f64>,
        sigma_zz: DMatrix<f64>,
        sigma_yy: DMatrix<f64>,
    ) -> Self {
        Self {
            sigma_yz: Some(sigma_yz),
            sigma_zz: Some(sigma_zz),
            sigma_yy: Some(sigma_yy),
            sigma_yzq: None,
            sigma_zzq: None,
            y_sq: None,
            provenance: Provenance::Prescribed,
        }
    }
}

/// The loss a network is trained on: the sample average over a dataset, or
/// the same loss expressed directly through second-moment statistics
/// (exact for the linear and quadratic families).
#[derive(Clone, Copy, Debug)]
pub enum LossModel<'a> {
    Data(&'a Dataset),
    LinearStats(&'a DataStats),
    QuadStats(&'a DataStats),
}

/// Empirical statistics of a dataset for the given activation kind.
pub fn compute_stats(data: &Dataset, for_kind: &ActivationKind) -> Result<DataStats> {
    if data.is_empty() {
        return Err(CoreError::InvalidInput("empty dataset".into()));
    }
    let p = data.len() as f64;
    let mut stats = DataStats::empty(Provenance::Empirical { p: data.len() });
    match for_kind {
        ActivationKind::LinearAttention {
            embed_dim,
            head_rank,
            ..
        } => {
            // Z assembled from the cubic token statistics of the forward map
            // with the readout fixed to the label coordinate:
            // uᵀ Z̃ u = kᵀ (XXᵀe) x_qᵀ q summed over head-rank rows.
            let d1 = embed_dim + 1;
            let r = *head_rank;
            let n = 2 * r * d1;
            let mut syz = DMatrix::zeros(n, n);
            let mut y_sq = 0.0;
            for (x, y) in data.iter() {
                let x = x.as_tokens()?;
                let y = y[0];
                let (a, xq) = crate::net::attention_features(x);
                let ae = a.column(d1 - 1).into_owned();
                let b = &ae * xq.transpose();
                // M = B ⊗ I_R in the column-major vec convention
                for c1 in 0..d1 {
                    for c2 in 0..d1 {
                        for rho in 0..r {
                            let i = c1 * r + rho;
                            let j = r * d1 + c2 * r + rho;
                            let val = 0.5 * y * b[(c1, c2)];
                            syz[(i, j)] += val;
                            syz[(j, i)] += val;
                        }
                    }
                }
                y_sq += y * y;
            }
            stats.sigma_yzq = Some(syz / p);
            stats.y_sq = Some(y_sq / p);
        }
        kind if kind.is_conv() => {
            let n_w = kind.input_dim() / CONV_STRIDE;
            let mut syz = DMatrix::zeros(n_w, CONV_KERNEL);
            let mut szz = DMatrix::zeros(kind.input_dim(), kind.input_dim());
            let mut syy = DMatrix::zeros(1, 1);
            for (x, y) in data.iter() {
                let x = x.as_vector()?;
                for w in 0..n_w {
                    for j in 0..CONV_KERNEL {
                        syz[(w, j)] += y[0] * x[w * CONV_STRIDE + j];
                    }
                }
                szz += x * x.transpose();
                syy[(0, 0)] += y[0] * y[0];
            }
            stats.sigma_yz = Some(syz / p);
            stats.sigma_zz = Some(szz / p);
            stats.sigma_yy = Some(syy / p);
        }
        kind => {
            let d = kind.input_dim();
            let n_out = data.targets[0].len();
            let mut syz = DMatrix::zeros(n_out, d);
            let mut szz = DMatrix::zeros(d, d);
            let mut syy = DMatrix::zeros(n_out, n_out);
            for (x, y) in data.iter() {
                let x = x.as_vector()?;
                syz += y * x.transpose();
                szz += x * x.transpose();
                syy += y * y.transpose();
            }
            stats.sigma_yz = Some(syz / p);
            stats.sigma_zz = Some(szz / p);
            stats.sigma_yy = Some(syy / p);
            if matches!(
                kind,
                ActivationKind::QuadraticFc { .. } | ActivationKind::PolyFc { degree: 2, .. }
            ) {
                let mut syzq = DMatrix::zeros(d, d);
                let mut szzq = DMatrix::zeros(d * d, d * d);
                let mut y_sq = 0.0;
                for (x, y) in data.iter() {
                    let x = x.as_vector()?;
                    let z = x * x.transpose();
                    syzq += y[0] * &z;
                    let vz = DVector::from_column_slice(z.as_slice());
                    szzq += &vz * vz.transpose();
                    y_sq += y[0] * y[0];
                }
                stats.sigma_yzq = Some(syzq / p);
                stats.sigma_zzq = Some(szzq / p);
                stats.y_sq = Some(y_sq / p);
            }
        }
    }
    Ok(stats)
}

/// The synthetic dataset constructions.
#[derive(Clone, Debug)]
pub enum GenKind {
    /// y = W* x with x ~ N(0, [[1,1],[1,4]]) and W* the identity map.
    LinearFcTeacher { p: usize },
    /// Scalar teacher y = w*ᵀx, w* = (1,1,-1,1)/√5, x ~ N(0, diag(1,1,2,1)).
    LinearConv { p: usize },
    /// The two-point orthogonal-input ReLU dataset.
    ReluOrthogonal,
    /// Four one-hot-block points for the conv ReLU network.
    ReluConv,
    /// In-context linear regression token matrices.
    IclRegression { d: usize, n: usize, p: usize },
    /// y = (x·e1)² + (x·e2)², x ~ N(0, I).
    QuadraticTeacher { p: usize },
    /// Width-2 teacher with the same activation as the student.
    GenericTeacher {
        activation: ActivationKind,
        units: Vec<(f64, Vec<f64>)>,
        p: usize,
    },
    Csv { path: String },
}

fn standard_normal_vec<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Deterministic dataset generation. Identical (kind, seed) produce
/// bitwise-identical datasets.
pub fn gen_dataset(kind: &GenKind, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        GenKind::LinearFcTeacher { p } => {
            // chol([[1,1],[1,4]]) = [[1,0],[1,√3]]
            let chol = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 3.0_f64.sqrt()]);
            let mut xs = Vec::with_capacity(*p);
            let mut ys = Vec::with_capacity(*p);
            for _ in 0..*p {
                let x = &chol * standard_normal_vec(2, &mut rng);
                ys.push(x.clone());
                xs.push(x);
            }
            Ok(Dataset::from_vectors(xs, ys, "linear-fc-teacher"))
        }
        GenKind::LinearConv { p } => {
            let w = DVector::from_vec(vec![1.0, 1.0, -1.0, 1.0]) / 5.0_f64.sqrt();
            let scale = DVector::from_vec(vec![1.0, 1.0, 2.0_f64.sqrt(), 1.0]);
            let mut xs = Vec::with_capacity(*p);
            let mut ys = Vec::with_capacity(*p);
            for _ in 0..*p {
                let x = standard_normal_vec(4, &mut rng).component_mul(&scale);
                ys.push(DVector::from_element(1, w.dot(&x)));
                xs.push(x);
            }
            Ok(Dataset::from_vectors(xs, ys, "linear-conv"))
        }
        GenKind::ReluOrthogonal => Ok(Dataset::from_vectors(
            vec![
                DVector::from_vec(vec![1.0, 0.5]),
                DVector::from_vec(vec![-1.0, 2.0]),
            ],
            vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            "relu-orthogonal",
        )),
        GenKind::ReluConv => {
            let w = DVector::from_vec(vec![1.0, 1.0, -1.0, 1.0]) / 5.0_f64.sqrt();
            let sqrt8 = 2.0 * 2.0_f64.sqrt();
            let xs = vec![
                DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 2.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, sqrt8, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 0.0, 2.0]),
            ];
            let ys = xs
                .iter()
                .map(|x| DVector::from_element(1, w.dot(x)))
                .collect();
            Ok(Dataset::from_vectors(xs, ys, "relu-conv"))
        }
        GenKind::IclRegression { d, n, p } => {
            let mut xs = Vec::with_capacity(*p);
            let mut ys = Vec::with_capacity(*p);
            for _ in 0..*p {
                let w = standard_normal_vec(*d, &mut rng);
                let mut x = DMatrix::zeros(d + 1, n + 1);
                for col in 0..=*n {
                    let token = standard_normal_vec(*d, &mut rng);
                    for row in 0..*d {
                        x[(row, col)] = token[row];
                    }
                    // label row; query slot stays zero
                    if col < *n {
                        x[(*d, col)] = w.dot(&token);
                    }
                }
                let xq = x.column(*n).rows(0, *d).into_owned();
                ys.push(w.dot(&xq));
                xs.push(x);
            }
            Ok(Dataset::from_tokens(xs, ys, "icl-regression"))
        }
        GenKind::QuadraticTeacher { p } => {
            let mut xs = Vec::with_capacity(*p);
            let mut ys = Vec::with_capacity(*p);
            for _ in 0..*p {
                let x = standard_normal_vec(2, &mut rng);
                ys.push(DVector::from_element(1, x[0] * x[0] + x[1] * x[1]));
                xs.push(x);
            }
            Ok(Dataset::from_vectors(xs, ys, "quadratic-teacher"))
        }
        GenKind::GenericTeacher {
            activation,
            units,
            p,
        } => {
            let teacher_units = units
                .iter()
                .map(|(v, u)| {
                    UnitParams::new(
                        DVector::from_element(activation.n_v(), *v),
                        DVector::from_column_slice(u),
                    )
                })
                .collect();
            let teacher = UnitLayerNet::new(
                activation.clone(),
                teacher_units,
                crate::net::OutMap::Identity,
            )?;
            let d = activation.input_dim();
            let mut xs = Vec::with_capacity(*p);
            let mut ys = Vec::with_capacity(*p);
            for _ in 0..*p {
                let x = standard_normal_vec(d, &mut rng);
                let y = teacher.forward(&SampleInput::Vector(x.clone()))?;
                ys.push(y);
                xs.push(x);
            }
            Ok(Dataset::from_vectors(xs, ys, "generic-teacher"))
        }
        GenKind::Csv { path } => Dataset::read_csv(path),
    }
}

/// Normalized power-law spectrum: s_n ∝ n^{-κ} with Σ s_n = 1.
pub fn power_law_spectrum(kappa: f64, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d).map(|n| (n as f64).powf(-kappa)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|s| s / total).collect()
}

pub enum SpectrumMode {
    Linear,
    Quadratic,
}

/// Power-law spectrum datasets for the width/data-distribution predictions.
///
/// Linear mode prescribes Σ_zz = I and Σ_yz = Q diag(s) Rᵀ with seeded random
/// orthogonal factors, and samples y = Σ_yz z, z ~ N(0, I).
///
/// Quadratic mode prescribes a symmetric Σ_yZ of size (D+1) whose eigenvalues
/// are the normalized power law plus one negative eigenvalue of magnitude
/// 0.5·s_D (the sign assumption of the unit-timescale analysis), realized
/// exactly by a Gaussian-input quadratic teacher; the sampled dataset supplies
/// the empirical Σ_ZZ block at desk scale.
pub fn gen_spectrum_dataset(
    kappa: f64,
    d: usize,
    mode: SpectrumMode,
    p: usize,
    seed: u64,
) -> Result<(Dataset, DataStats)> {
    if d == 0 || kappa < 0.0 {
        return Err(CoreError::InvalidInput(
            "spectrum requires d ≥ 1 and κ ≥ 0".into(),
        ));
    }
    let s = power_law_spectrum(kappa, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        SpectrumMode::Linear => {
            let q = random_orthogonal(d, &mut rng);
            let r = random_orthogonal(d, &mut rng);
            let diag = DMatrix::from_diagonal(&DVector::from_vec(s.clone()));
            let sigma_yz = &q * &diag * r.transpose();
            let sigma_yy = &q * DMatrix::from_diagonal(&DVector::from_vec(
                s.iter().map(|x| x * x).collect(),
            )) * q.transpose();
            let stats =
                DataStats::prescribed_linear(sigma_yz.clone(), DMatrix::identity(d, d), sigma_yy);
            let mut xs = Vec::with_capacity(p);
            let mut ys = Vec::with_capacity(p);
            for _ in 0..p {
                let z = standard_normal_vec(d, &mut rng);
                ys.push(&sigma_yz * &z);
                xs.push(z);
            }
            Ok((Dataset::from_vectors(xs, ys, "spectrum-linear"), stats))
        }
        SpectrumMode::Quadratic => {
            let d_tot = d + 1;
            let mut eigs = s.clone();
            eigs.push(-0.5 * s[d - 1]);
            let basis = random_orthogonal(d_tot, &mut rng);
            let mut sigma_yzq = DMatrix::zeros(d_tot, d_tot);
            for (k, &e) in eigs.iter().enumerate() {
                let rk = basis.column(k);
                sigma_yzq += e * rk * rk.transpose();
            }
            // Gaussian quadratic teacher realizing the prescribed Σ_yZ:
            // y = Σ c_k (r_kᵀx)² gives Σ_yZ = (Σc)I + 2Σ c_k r_k r_kᵀ.
            let c_sum: f64 = eigs.iter().sum::<f64>() / (d_tot as f64 + 2.0);
            let coeffs: Vec<f64> = eigs.iter().map(|e| 0.5 * (e - c_sum)).collect();
            let y_sq = 2.0 * coeffs.iter().map(|c| c * c).sum::<f64>()
                + coeffs.iter().sum::<f64>().powi(2);
            let mut xs = Vec::with_capacity(p);
            let mut ys = Vec::with_capacity(p);
            for _ in 0..p {
                let x = standard_normal_vec(d_tot, &mut rng);
                let y: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let g = basis.column(k).dot(&x);
                        c * g * g
                    })
                    .sum();
                ys.push(DVector::from_element(1, y));
                xs.push(x);
            }
            let dataset = Dataset::from_vectors(xs, ys, "spectrum-quadratic");
            let empirical = compute_stats(&dataset, &ActivationKind::QuadraticFc { input_dim: d_tot })?;
            let mut stats = DataStats::empty(Provenance::Prescribed);
            stats.sigma_yzq = Some(sigma_yzq);
            stats.y_sq = Some(y_sq);
            stats.sigma_zzq = empirical.sigma_zzq;
            Ok((dataset, stats))
        }
    }
}

/// Weight initialization schemes.
#[derive(Clone, Debug)]
pub enum InitScheme {
    /// Every entry i.i.d. N(0, ε²).
    Isotropic { eps: f64 },
    /// Per unit θ_i = σ Σ_{k≤r} α_{ki} [q̂_k; r̂_k] with seeded random
    /// orthonormal directions, α ~ N(0,1), plus N(0, δ²) perturbation.
    LowRank { rank: usize, sigma: f64, delta: f64 },
    /// A random N(0,1) net projected onto the given constraints, plus
    /// N(0, δ²) perturbation.
    ManifoldAdjacent {
        constraints: Vec<crate::manifold::ManifoldConstraint>,
        delta: f64,
    },
}

#[derive(Clone, Debug)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

/// Draw the unit-layer weights of a width-`h` network.
pub fn init_weights(activation: &ActivationKind, h: usize, spec: &InitSpec) -> Result<UnitLayerNet> {
    let (n_u, n_v) = (activation.n_u(), activation.n_v());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.scheme {
        InitScheme::Isotropic { eps } => {
            if *eps <= 0.0 {
                return Err(CoreError::InvalidInput("isotropic ε must be positive".into()));
            }
            let units = (0..h)
                .map(|_| {
                    UnitParams::new(
                        *eps * standard_normal_vec(n_v, &mut rng),
                        *eps * standard_normal_vec(n_u, &mut rng),
                    )
                })
                .collect();
            UnitLayerNet::new(activation.clone(), units, crate::net::OutMap::Identity)
        }
        InitScheme::LowRank { rank, sigma, delta } => {
            let r = *rank;
            if r == 0 || r > n_v.min(n_u) {
                return Err(CoreError::InvalidInput(format!(
                    "low-rank rank {r} must be in 1..=min(n_v, n_u) = {}",
                    n_v.min(n_u)
                )));
            }
            if *sigma <= 0.0 || *delta < 0.0 {
                return Err(CoreError::InvalidInput("low-rank needs σ > 0, δ ≥ 0".into()));
            }
            let qs = random_orthogonal(n_v, &mut rng);
            let rs = random_orthogonal(n_u, &mut rng);
            let units = (0..h)
                .map(|_| {
                    let mut v = DVector::zeros(n_v);
                    let mut u = DVector::zeros(n_u);
                    for k in 0..r {
                        let alpha: f64 = rng.sample(StandardNormal);
                        v.axpy(*sigma * alpha, &qs.column(k).into_owned(), 1.0);
                        u.axpy(*sigma * alpha, &rs.column(k).into_owned(), 1.0);
                    }
                    if *delta > 0.0 {
                        v += *delta * standard_normal_vec(n_v, &mut rng);
                        u += *delta * standard_normal_vec(n_u, &mut rng);
                    }
                    UnitParams::new(v, u)
                })
                .collect();
            UnitLayerNet::new(activation.clone(), units, crate::net::OutMap::Identity)
        }
        InitScheme::ManifoldAdjacent { constraints, delta } => {
            let units = (0..h)
                .map(|_| {
                    UnitParams::new(
                        standard_normal_vec(n_v, &mut rng),
                        standard_normal_vec(n_u, &mut rng),
                    )
                })
                .collect();
            let mut net =
                UnitLayerNet::new(activation.clone(), units, crate::net::OutMap::Identity)?;
            for c in constraints {
                net = crate::manifold::project(&net, c)?;
            }
            if *delta > 0.0 {
                for unit in &mut net.units {
                    unit.v += *delta * standard_normal_vec(n_v, &mut rng);
                    unit.u += *delta * standard_normal_vec(n_u, &mut rng);
                }
            }
            Ok(net)
        }
    }
}

/// Seeded Gaussian matrices for chain/skip out maps.
pub fn init_matrices(dims: &[(usize, usize)], eps: f64, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dims.iter()
        .map(|&(r, c)| DMatrix::from_fn(r, c, |_, _| eps * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Derive an independent substream seed from a config seed and a stream name.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the seed
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed.wrapping_mul(0x9e3779b97f4a7c15)
}

/// Write a matrix as CSV with a one-line shape header `# rows cols`.
pub fn write_matrix_csv<P: AsRef<Path>>(path: P, m: &DMatrix<f64>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# {} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv<P: AsRef<Path>>(path: P) -> Result<DMatrix<f64>> {
    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::InvalidInput("empty matrix file".into()))??;
    let dims: Vec<usize> = header
        .trim_start_matches('#')
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CoreError::InvalidInput(format!("bad shape header: {e}")))?;
    if dims.len() != 2 {
        return Err(CoreError::InvalidInput("shape header must be `# rows cols`".into()));
    }
    let mut vals = Vec::with_capacity(dims[0] * dims[1]);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            vals.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| CoreError::InvalidInput(format!("bad matrix value: {e}")))?,
            );
        }
    }
    if vals.len() != dims[0] * dims[1] {
        return Err(CoreError::InvalidInput("matrix body does not match shape header".into()));
    }
    Ok(DMatrix::from_row_slice(dims[0], dims[1], &vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn relu_orthogonal_is_the_two_point_set() {
        let d = gen_dataset(&GenKind::ReluOrthogonal, 0).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.inputs[0].as_vector().unwrap().as_slice(), &[1.0, 0.5]);
        assert_eq!(d.inputs[1].as_vector().unwrap().as_slice(), &[-1.0, 2.0]);
        assert_eq!(d.targets[0][0], 1.0);
        assert_eq!(d.targets[1][0], -1.0);
    }

    #[test]
    fn relu_conv_has_the_four_block_points() {
        let d = gen_dataset(&GenKind::ReluConv, 0).unwrap();
        assert_eq!(d.len(), 4);
        let x3 = d.inputs[2].as_vector().unwrap();
        assert_relative_eq!(x3[2], 2.0 * 2.0_f64.sqrt(), epsilon = 1e-15);
        // y3 = w*·x3 = -2√2/√5
        assert_relative_eq!(
            d.targets[2][0],
            -2.0 * 2.0_f64.sqrt() / 5.0_f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quadratic_teacher_evaluates() {
        let d = gen_dataset(&GenKind::QuadraticTeacher { p: 16 }, 3).unwrap();
        for (x, y) in d.iter() {
            let x = x.as_vector().unwrap();
            assert_relative_eq!(y[0], x[0] * x[0] + x[1] * x[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn generators_are_reproducible() {
        let a = gen_dataset(&GenKind::LinearFcTeacher { p: 32 }, 11).unwrap();
        let b = gen_dataset(&GenKind::LinearFcTeacher { p: 32 }, 11).unwrap();
        for (sa, sb) in a.inputs.iter().zip(b.inputs.iter()) {
            assert_eq!(sa.as_vector().unwrap(), sb.as_vector().unwrap());
        }
    }

    #[test]
    fn stats_on_singleton_scalar_dataset() {
        let d = Dataset::from_vectors(
            vec![DVector::from_element(1, 1.0)],
            vec![DVector::from_element(1, 2.0)],
            "t",
        );
        let s = compute_stats(
            &d,
            &ActivationKind::LinearFc {
                input_dim: 1,
                output_dim: 1,
            },
        )
        .unwrap();
        assert_relative_eq!(s.sigma_yz.unwrap()[(0, 0)], 2.0);
        assert_relative_eq!(s.sigma_zz.unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn relu_orthogonal_second_moment_matches_hand_value() {
        let d = gen_dataset(&GenKind::ReluOrthogonal, 0).unwrap();
        let s = compute_stats(
            &d,
            &ActivationKind::ReluFc {
                input_dim: 2,
                output_dim: 1,
            },
        )
        .unwrap();
        let szz = s.sigma_zz.unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, -0.75, -0.75, 2.125]);
        assert_relative_eq!(szz, expect, epsilon = 1e-15);
    }

    #[test]
    fn power_law_normalization() {
        let s = power_law_spectrum(1.0, 3);
        assert_relative_eq!(s[0], 6.0 / 11.0, epsilon = 1e-15);
        assert_relative_eq!(s[1], 3.0 / 11.0, epsilon = 1e-15);
        assert_relative_eq!(s[2], 2.0 / 11.0, epsilon = 1e-15);
        let flat = power_law_spectrum(0.0, 3);
        for v in flat {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn spectrum_linear_prescribes_exact_stats() {
        let (data, stats) = gen_spectrum_dataset(1.0, 3, SpectrumMode::Linear, 256, 5).unwrap();
        let syz = stats.sigma_yz.as_ref().unwrap();
        let svd = syz.clone().svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_relative_eq!(s[0], 6.0 / 11.0, epsilon = 1e-12);
        // targets are exactly Σ_yz z
        let x0 = data.inputs[0].as_vector().unwrap();
        assert_relative_eq!(&data.targets[0], &(syz * x0), epsilon = 1e-12);
    }

    #[test]
    fn spectrum_quadratic_realizes_prescribed_eigenvalues() {
        let (data, stats) =
            gen_spectrum_dataset(1.0, 3, SpectrumMode::Quadratic, 4096, 9).unwrap();
        let prescribed = stats.sigma_yzq.as_ref().unwrap();
        // empirical Σ_yZ from the sampled teacher converges to the prescription
        let emp = compute_stats(&data, &ActivationKind::QuadraticFc { input_dim: 4 })
            .unwrap()
            .sigma_yzq
            .unwrap();
        let err = (&emp - prescribed).norm() / prescribed.norm();
        assert!(err < 0.2, "monte-carlo error {err}");
        // one negative eigenvalue of magnitude s_D/2
        let eig = crate::linalg::sorted_symmetric_eigen(prescribed);
        assert_relative_eq!(eig.values[3], -0.5 * 2.0 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_init_variance() {
        let spec = InitSpec {
            scheme: InitScheme::Isotropic { eps: 1e-6 },
            seed: 1,
        };
        let kind = ActivationKind::LinearFc {
            input_dim: 10,
            output_dim: 10,
        };
        let net = init_weights(&kind, 500, &spec).unwrap();
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for unit in &net.units {
            sum_sq += unit.v.norm_squared() + unit.u.norm_squared();
            n += unit.v.len() + unit.u.len();
        }
        let var = sum_sq / n as f64;
        assert!((var - 1e-12).abs() < 0.2e-12, "sample variance {var}");
    }

    #[test]
    fn low_rank_init_has_exact_rank() {
        let spec = InitSpec {
            scheme: InitScheme::LowRank {
                rank: 1,
                sigma: 1.0,
                delta: 0.0,
            },
            seed: 2,
        };
        let kind = ActivationKind::LinearFc {
            input_dim: 3,
            output_dim: 3,
        };
        let net = init_weights(&kind, 8, &spec).unwrap();
        let u = net.first_layer_matrix();
        let svals = u.svd(false, false).singular_values;
        let mut s: Vec<f64> = svals.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(s[0] > 0.1);
        assert!(s[1] < 1e-12 * s[0]);
    }

    #[test]
    fn csv_roundtrip() {
        let d = gen_dataset(&GenKind::LinearFcTeacher { p: 8 }, 4).unwrap();
        let tmp = std::env::temp_dir().join("plateau_test_dataset.csv");
        d.write_csv(&tmp).unwrap();
        let d2 = Dataset::read_csv(&tmp).unwrap();
        assert_eq!(d.len(), d2.len());
        for ((xa, ya), (xb, yb)) in d.iter().zip(d2.iter()) {
            assert_relative_eq!(xa.as_vector().unwrap(), xb.as_vector().unwrap(), epsilon = 1e-15);
            assert_relative_eq!(ya, yb, epsilon = 1e-15);
        }
        std::fs::remove_file(tmp).ok();
    }

    #[test]
    fn matrix_csv_roundtrip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tmp = std::env::temp_dir().join("plateau_test_matrix.csv");
        write_matrix_csv(&tmp, &m).unwrap();
        let m2 = read_matrix_csv(&tmp).unwrap();
        assert_relative_eq!(m, m2, epsilon = 1e-15);
        std::fs::remove_file(tmp).ok();
    }
}
