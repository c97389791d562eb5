use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, ByteReader, ByteWriter};
use crate::kernel::{KernelContext, KernelFeatures};
use crate::linalg::{cholesky, psd_sqrt, CholeskyFactor, Matrix};
use crate::lla::{LikelihoodModel, Predictions};
use crate::nn::{read_network, write_network};

pub const VALLA_MAGIC: &[u8; 4] = b"VLVA";
pub const VALLA_VERSION: u32 = 1;

/// Initial scale of the covariance factor, `L_A = 1e-3·I`.
pub const INITIAL_FACTOR_SCALE: f64 = 1e-3;

const PREDICT_CHUNK: usize = 256;

/// Sparse variational posterior with the mean pinned to the network and covariance
/// `K*(x, x′) = κ(x, x′) − κ(x, Z) L (I + Lᵀ κ(Z, Z) L)⁻¹ Lᵀ κ(Z, x′)`, where `A = L Lᵀ`.
///
/// The prior variance lives in `ctx` and the noise variance in `likelihood`.
#[derive(Clone, Debug)]
pub struct VallaState {
    pub ctx: KernelContext,
    /// Inducing locations `Z`, `M × D`.
    pub inducing: Matrix,
    /// Factor `L` of `A = L Lᵀ`, `(M·C) × (M·C)`.
    pub a_factor: Matrix,
    pub likelihood: LikelihoodModel,
    pub alpha: f64,
}

/// Quantities shared by prediction, the KL and the objective.
pub(crate) struct Core {
    pub zf: KernelFeatures,
    pub k_zz: Matrix,
    /// Cholesky factor of `B = I + Lᵀ K_zz L`.
    pub b_factor: CholeskyFactor,
}

impl VallaState {
    pub fn new(
        ctx: KernelContext,
        inducing: Matrix,
        a_factor: Matrix,
        likelihood: LikelihoodModel,
        alpha: f64,
    ) -> Result<Self> {
        likelihood.validate()?;
        if inducing.rows() == 0 || inducing.cols() != ctx.input_dim() {
            return Err(Error::dims(format!(
                "inducing locations {:?} for input dimension {}",
                inducing.shape(),
                ctx.input_dim()
            )));
        }
        let n = inducing.rows() * ctx.outputs();
        if a_factor.shape() != (n, n) {
            return Err(Error::dims(format!("covariance factor {:?}, expected {n}×{n}", a_factor.shape())));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if likelihood.is_categorical() && alpha != 1.0 {
            return Err(Error::config("the categorical objective supports alpha = 1 only"));
        }
        if !inducing.is_finite() || !a_factor.is_finite() {
            return Err(Error::non_finite("variational parameters"));
        }
        Ok(VallaState {
            ctx,
            inducing,
            a_factor,
            likelihood,
            alpha,
        })
    }

    /// State with `L = 1e-3·I`, close to the prior.
    pub fn initial(ctx: KernelContext, inducing: Matrix, likelihood: LikelihoodModel, alpha: f64) -> Result<Self> {
        let n = inducing.rows() * ctx.outputs();
        let mut l = Matrix::identity(n);
        l.scale_in_place(INITIAL_FACTOR_SCALE);
        VallaState::new(ctx, inducing, l, likelihood, alpha)
    }

    /// State from an explicit PSD `A`, factored with its symmetric square root (not triangular).
    pub fn from_covariance_parameter(
        ctx: KernelContext,
        inducing: Matrix,
        a: &Matrix,
        likelihood: LikelihoodModel,
        alpha: f64,
    ) -> Result<Self> {
        let l = psd_sqrt(a)?;
        VallaState::new(ctx, inducing, l, likelihood, alpha)
    }

    pub fn inducing_count(&self) -> usize {
        self.inducing.rows()
    }

    pub fn outputs(&self) -> usize {
        self.ctx.outputs()
    }

    pub fn log_prior_variance(&self) -> f64 {
        self.ctx.log_prior_variance
    }

    pub fn log_noise_variance(&self) -> Option<f64> {
        self.likelihood.noise_variance().map(f64::ln)
    }

    /// `A = L Lᵀ`.
    pub fn covariance_parameter(&self) -> Matrix {
        self.a_factor.matmul_t(&self.a_factor).expect("square factor")
    }

    pub(crate) fn core(&self) -> Result<Core> {
        let zf = self.ctx.features(&self.inducing)?;
        let mut k_zz = self.ctx.gram(&zf, &zf)?;
        k_zz.symmetrize();
        let l = &self.a_factor;
        let mut b = l.t_matmul(&k_zz.matmul(l)?)?;
        b.symmetrize();
        b.add_diag(1.0);
        let b_factor = cholesky(&b, 0.0)?;
        Ok(Core { zf, k_zz, b_factor })
    }

    /// `KL(q ‖ p)` restricted to the covariance terms:
    /// `½ [log|B| + tr(B⁻¹) − M·C]`, which equals `½ log|I + K A| − ½ tr(K (A⁻¹ + K)⁻¹)`.
    pub fn kl(&self) -> Result<f64> {
        Ok(kl_from_factor(&self.core()?.b_factor))
    }

    /// Predictive mean `g(x, θ̂)` and covariance blocks.
    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        let c = self.outputs();
        let mean = self.ctx.net().predict(x)?;
        let core = self.core()?;
        let mut cov = Matrix::zeros(x.rows() * c, c);
        let mut start = 0;
        while start < x.rows() {
            let end = (start + PREDICT_CHUNK).min(x.rows());
            let idx: Vec<usize> = (start..end).collect();
            let f = self.ctx.features(&x.select_rows(&idx))?;
            let mut blocks = self.ctx.diag_blocks(&f);
            let v = core
                .b_factor
                .solve_lower(&self.a_factor.t_matmul(&self.ctx.gram(&core.zf, &f)?)?)?;
            for i in 0..idx.len() {
                let vi = v.submatrix(0, i * c, v.rows(), c);
                let reduction = vi.t_matmul(&vi)?;
                for o in 0..c {
                    for p in 0..c {
                        blocks[(i * c + o, p)] -= reduction[(o, p)];
                    }
                }
            }
            cov.set_submatrix(start * c, 0, &blocks);
            start = end;
        }
        Predictions::new(mean, cov, self.likelihood)
    }

    /// Full posterior covariance `K*(X₁, X₂)` in point-major layout.
    pub fn posterior_covariance(&self, x1: &Matrix, x2: &Matrix) -> Result<Matrix> {
        let core = self.core()?;
        let f1 = self.ctx.features(x1)?;
        let f2 = self.ctx.features(x2)?;
        let project = |f: &KernelFeatures| -> Result<Matrix> {
            core.b_factor
                .solve_lower(&self.a_factor.t_matmul(&self.ctx.gram(&core.zf, f)?)?)
        };
        let (v1, v2) = (project(&f1)?, project(&f2)?);
        self.ctx.gram(&f1, &f2)?.sub(&v1.t_matmul(&v2)?)
    }

    pub fn write(&self, w: &mut ByteWriter) {
        w.bytes(VALLA_MAGIC);
        w.u32(VALLA_VERSION);
        write_network(self.ctx.net(), w);
        w.f64(self.ctx.log_prior_variance);
        self.likelihood.encode(w);
        w.f64(self.alpha);
        w.matrix(&self.inducing);
        w.matrix(&self.a_factor);
    }

    pub fn read(r: &mut ByteReader) -> Result<VallaState> {
        r.header(VALLA_MAGIC, VALLA_VERSION)?;
        let net = read_network(r)?;
        let ctx = KernelContext::new(Arc::new(net), r.f64()?)?;
        let likelihood = LikelihoodModel::decode(r)?;
        let alpha = r.f64()?;
        let inducing = r.matrix()?;
        let a_factor = r.matrix()?;
        VallaState::new(ctx, inducing, a_factor, likelihood, alpha)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = ByteWriter::new();
        self.write(&mut w);
        write_file(path, &w.finish())
    }

    pub fn load(path: &Path) -> Result<VallaState> {
        let bytes = read_file(path)?;
        let mut r = ByteReader::new(&bytes);
        let state = VallaState::read(&mut r)?;
        r.expect_end()?;
        Ok(state)
    }
}

pub(crate) fn kl_from_factor(b_factor: &CholeskyFactor) -> f64 {
    let n = b_factor.dim() as f64;
    0.5 * (b_factor.log_det() + b_factor.inverse().trace() - n)
}

/// Closed-form optimum of the full-batch ELBO for a Gaussian likelihood:
/// `A = σ⁻² K_β⁻¹ κ(Z, X) κ(X, Z) K_β⁻¹`.
pub fn optimal_a(ctx: &KernelContext, inducing: &Matrix, x: &Matrix, noise_variance: f64) -> Result<Matrix> {
    if !(noise_variance > 0.0) {
        return Err(Error::config("optimal A needs a positive noise variance"));
    }
    let n = inducing.rows() * ctx.outputs();
    if x.rows() == 0 {
        return Ok(Matrix::zeros(n, n));
    }
    let zf = ctx.features(inducing)?;
    let xf = ctx.features(x)?;
    let mut k_zz = ctx.gram(&zf, &zf)?;
    k_zz.symmetrize();
    let t = cholesky(&k_zz, 0.0)?.solve(&ctx.gram(&zf, &xf)?)?;
    let mut a = t.matmul_t(&t)?;
    a.scale_in_place(1.0 / noise_variance);
    a.symmetrize();
    Ok(a)
}
