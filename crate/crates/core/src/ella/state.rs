use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, ByteReader, ByteWriter};
use crate::kernel::{KernelContext, KernelFeatures};
use crate::linalg::{cholesky, rng_stream, sym_eig, CholeskyFactor, Matrix};
use crate::lla::{lambda_of, LikelihoodModel, Predictions};
use crate::nn::{read_network, write_network};

pub const ELLA_MAGIC: &[u8; 4] = b"VLEL";
pub const ELLA_VERSION: u32 = 1;

/// Eigenvalues below `EIGEN_FLOOR·λ_max` are treated as numerically null.
pub const EIGEN_FLOOR: f64 = 1e-10;

const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllaConfig {
    /// Number of anchor points `M` drawn from the training inputs.
    pub anchors: usize,
    /// Feature dimension `K ≤ M·C`.
    pub feature_dim: usize,
    pub seed: u64,
    /// Only the first this many training points enter the posterior.
    pub max_points: Option<usize>,
}

impl Default for EllaConfig {
    fn default() -> Self {
        EllaConfig {
            anchors: 100,
            feature_dim: 20,
            seed: 0,
            max_points: None,
        }
    }
}

/// Low-rank posterior `Cov[f(x)] = φ(x)ᵀ G⁻¹ φ(x)` with `φ(x) = Λ̂^{-1/2} Ûᵀ κ₁(X̂, x)` (`K × C`),
/// where `κ₁ = κ/σ₀²`, and `G = Σ_n φ_n Λ_n φ_nᵀ + I/σ₀²`.
#[derive(Clone, Debug)]
pub struct EllaState {
    pub ctx: KernelContext,
    pub likelihood: LikelihoodModel,
    pub anchors: Matrix,
    /// `Λ̂^{-1/2} Ûᵀ`, `K × (M·C)`.
    pub projection: Matrix,
    /// `G`, `K × K`.
    pub precision: Matrix,
    anchor_features: KernelFeatures,
    factor: CholeskyFactor,
}

/// Draws the anchors, builds the projection and accumulates `G` in one ordered pass.
/// The posterior precision does not involve the targets, so only inputs are taken.
pub fn fit_ella(ctx: &KernelContext, likelihood: LikelihoodModel, x: &Matrix, config: &EllaConfig) -> Result<EllaState> {
    likelihood.validate()?;
    let c = ctx.outputs();
    let n = x.rows();
    let m = config.anchors;
    if m == 0 || m > n {
        return Err(Error::config(format!("ELLA needs 1 ≤ M ≤ N, got M = {m} with N = {n}")));
    }
    let k = config.feature_dim;
    if k == 0 || k > m * c {
        return Err(Error::config(format!("feature dimension {k} must lie in 1..={}", m * c)));
    }
    if x.cols() != ctx.input_dim() {
        return Err(Error::dims(format!("inputs have {} columns, network expects {}", x.cols(), ctx.input_dim())));
    }
    let mut rng = rng_stream(config.seed);
    let idx = rng.sample_without_replacement(n, m);
    let anchors = x.select_rows(&idx);
    let unit = ctx.with_log_prior_variance(0.0)?;
    let anchor_features = unit.features(&anchors)?;
    let mut k_hat = unit.gram(&anchor_features, &anchor_features)?;
    k_hat.symmetrize();
    let eig = sym_eig(&k_hat)?;
    let lambda_max = eig.values.first().copied().unwrap_or(0.0);
    let available = eig
        .values
        .iter()
        .filter(|v| lambda_max > 0.0 && **v > EIGEN_FLOOR * lambda_max)
        .count();
    if available < k {
        return Err(Error::EigenFloorExhausted { requested: k, available });
    }
    let projection = Matrix::from_fn(k, m * c, |r, col| eig.vectors[(col, r)] / eig.values[r].sqrt());

    let mut precision = Matrix::identity(k);
    precision.scale_in_place(1.0 / ctx.prior_variance());
    let used = config.max_points.map_or(n, |t| t.min(n));
    let mut start = 0;
    while start < used {
        let end = (start + CHUNK).min(used);
        let rows: Vec<usize> = (start..end).collect();
        let xb = x.select_rows(&rows);
        let phi = project(&unit, &anchor_features, &projection, &xb)?;
        let g = ctx.net().predict(&xb)?;
        for i in 0..rows.len() {
            let lambda = lambda_of(&likelihood, g.row(i));
            let phi_i = phi.submatrix(0, i * c, k, c);
            precision.add_assign(&phi_i.matmul(&lambda.matmul_t(&phi_i)?)?);
        }
        start = end;
    }
    precision.symmetrize();
    let factor = cholesky(&precision, 0.0)?;
    Ok(EllaState {
        ctx: ctx.clone(),
        likelihood,
        anchors,
        projection,
        precision,
        anchor_features,
        factor,
    })
}

fn project(unit: &KernelContext, anchor_features: &KernelFeatures, projection: &Matrix, x: &Matrix) -> Result<Matrix> {
    let f = unit.features(x)?;
    projection.matmul(&unit.gram(anchor_features, &f)?)
}

impl EllaState {
    pub fn feature_dim(&self) -> usize {
        self.projection.rows()
    }

    fn unit_ctx(&self) -> KernelContext {
        self.ctx.with_log_prior_variance(0.0).expect("finite")
    }

    /// Unit-prior-variance features stacked point-major, `K × (N·C)`.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        project(&self.unit_ctx(), &self.anchor_features, &self.projection, x)
    }

    /// Nyström prior `σ₀² φ(X₁)ᵀ φ(X₂)`.
    pub fn feature_kernel(&self, x1: &Matrix, x2: &Matrix) -> Result<Matrix> {
        Ok(self.features(x1)?.t_matmul(&self.features(x2)?)?.scale(self.ctx.prior_variance()))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        let c = self.ctx.outputs();
        let mean = self.ctx.net().predict(x)?;
        let mut cov = Matrix::zeros(x.rows() * c, c);
        let mut start = 0;
        while start < x.rows() {
            let end = (start + CHUNK).min(x.rows());
            let rows: Vec<usize> = (start..end).collect();
            let v = self.factor.solve_lower(&self.features(&x.select_rows(&rows))?)?;
            for i in 0..rows.len() {
                let vi = v.submatrix(0, i * c, v.rows(), c);
                let mut block = vi.t_matmul(&vi)?;
                block.symmetrize();
                cov.set_submatrix((start + i) * c, 0, &block);
            }
            start = end;
        }
        Predictions::new(mean, cov, self.likelihood)
    }

    pub fn write(&self, w: &mut ByteWriter) {
        w.bytes(ELLA_MAGIC);
        w.u32(ELLA_VERSION);
        write_network(self.ctx.net(), w);
        w.f64(self.ctx.log_prior_variance);
        self.likelihood.encode(w);
        w.matrix(&self.anchors);
        w.matrix(&self.projection);
        w.matrix(&self.precision);
    }

    pub fn read(r: &mut ByteReader) -> Result<EllaState> {
        r.header(ELLA_MAGIC, ELLA_VERSION)?;
        let net = read_network(r)?;
        let ctx = KernelContext::new(Arc::new(net), r.f64()?)?;
        let likelihood = LikelihoodModel::decode(r)?;
        let anchors = r.matrix()?;
        let projection = r.matrix()?;
        let precision = r.matrix()?;
        let c = ctx.outputs();
        if anchors.cols() != ctx.input_dim()
            || projection.cols() != anchors.rows() * c
            || precision.shape() != (projection.rows(), projection.rows())
        {
            return Err(Error::format("inconsistent ELLA state dimensions"));
        }
        let anchor_features = ctx.with_log_prior_variance(0.0)?.features(&anchors)?;
        let factor = cholesky(&precision, 0.0)?;
        Ok(EllaState {
            ctx,
            likelihood,
            anchors,
            projection,
            precision,
            anchor_features,
            factor,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = ByteWriter::new();
        self.write(&mut w);
        write_file(path, &w.finish())
    }

    pub fn load(path: &Path) -> Result<EllaState> {
        let bytes = read_file(path)?;
        let mut r = ByteReader::new(&bytes);
        let state = EllaState::read(&mut r)?;
        r.expect_end()?;
        Ok(state)
    }
}
