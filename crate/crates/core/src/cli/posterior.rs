use std::path::Path;
use std::sync::Arc;

use crate::data::Normalization;
use crate::ella::EllaState;
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, ByteReader, ByteWriter};
use crate::kernel::KernelContext;
use crate::linalg::Matrix;
use crate::lla::{fit_exact_with_cap, LikelihoodModel, LlaExactState, LlaWeightState, Predictions, WeightSpaceKind};
use crate::nn::{read_network, write_network, MlpNetwork};
use crate::valla::VallaState;

use super::Method;

pub const STATE_MAGIC: &[u8; 4] = b"VLST";
pub const STATE_VERSION: u32 = 1;

/// A fitted predictive of any method.
#[derive(Clone, Debug)]
pub enum Posterior {
    /// The network alone: zero function variance.
    Map {
        net: Arc<MlpNetwork>,
        likelihood: LikelihoodModel,
    },
    Exact(LlaExactState),
    Weight(LlaWeightState),
    Valla(VallaState),
    Ella(EllaState),
}

impl Posterior {
    pub fn method(&self) -> Method {
        match self {
            Posterior::Map { .. } => Method::Map,
            Posterior::Exact(_) => Method::LlaExact,
            Posterior::Weight(s) => match s.kind {
                WeightSpaceKind::LastLayer => Method::LlaLastLayer,
                _ => Method::LlaDiag,
            },
            Posterior::Valla(_) => Method::Valla,
            Posterior::Ella(_) => Method::Ella,
        }
    }

    pub fn network(&self) -> &MlpNetwork {
        match self {
            Posterior::Map { net, .. } => net,
            Posterior::Exact(s) => s.ctx.net(),
            Posterior::Weight(s) => s.ctx.net(),
            Posterior::Valla(s) => s.ctx.net(),
            Posterior::Ella(s) => s.ctx.net(),
        }
    }

    pub fn likelihood(&self) -> LikelihoodModel {
        match self {
            Posterior::Map { likelihood, .. } => *likelihood,
            Posterior::Exact(s) => s.likelihood,
            Posterior::Weight(s) => s.likelihood,
            Posterior::Valla(s) => s.likelihood,
            Posterior::Ella(s) => s.likelihood,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        match self {
            Posterior::Map { net, likelihood } => {
                let mean = net.predict(x)?;
                let c = mean.cols();
                Predictions::new(mean, Matrix::zeros(x.rows() * c, c), *likelihood)
            }
            Posterior::Exact(s) => s.predict(x),
            Posterior::Weight(s) => s.predict(x),
            Posterior::Valla(s) => s.predict(x),
            Posterior::Ella(s) => s.predict(x),
        }
    }

    fn write(&self, w: &mut ByteWriter) {
        match self {
            Posterior::Map { net, likelihood } => {
                w.u8(0);
                write_network(net, w);
                likelihood.encode(w);
            }
            Posterior::Exact(s) => {
                w.u8(1);
                write_network(s.ctx.net(), w);
                w.f64(s.ctx.log_prior_variance);
                s.likelihood.encode(w);
                w.matrix(&s.train_inputs);
            }
            Posterior::Weight(s) => {
                w.u8(2);
                write_network(s.ctx.net(), w);
                w.f64(s.ctx.log_prior_variance);
                s.likelihood.encode(w);
                w.u8(match s.kind {
                    WeightSpaceKind::Full => 0,
                    WeightSpaceKind::Diagonal => 1,
                    WeightSpaceKind::LastLayer => 2,
                });
                w.matrix(&s.precision);
            }
            Posterior::Valla(s) => {
                w.u8(3);
                s.write(w);
            }
            Posterior::Ella(s) => {
                w.u8(4);
                s.write(w);
            }
        }
    }

    fn read(r: &mut ByteReader) -> Result<Posterior> {
        let ctx_of = |r: &mut ByteReader| -> Result<KernelContext> {
            let net = read_network(r)?;
            KernelContext::new(Arc::new(net), r.f64()?)
        };
        Ok(match r.u8()? {
            0 => Posterior::Map {
                net: Arc::new(read_network(r)?),
                likelihood: LikelihoodModel::decode(r)?,
            },
            1 => {
                let ctx = ctx_of(r)?;
                let likelihood = LikelihoodModel::decode(r)?;
                let x = r.matrix()?;
                // the factorization is recomputed rather than stored
                Posterior::Exact(fit_exact_with_cap(&ctx, likelihood, &x, usize::MAX)?)
            }
            2 => {
                let ctx = ctx_of(r)?;
                let likelihood = LikelihoodModel::decode(r)?;
                let kind = match r.u8()? {
                    0 => WeightSpaceKind::Full,
                    1 => WeightSpaceKind::Diagonal,
                    2 => WeightSpaceKind::LastLayer,
                    k => return Err(Error::format(format!("unknown weight-space kind {k}"))),
                };
                Posterior::Weight(LlaWeightState::from_precision(&ctx, likelihood, kind, r.matrix()?)?)
            }
            3 => Posterior::Valla(VallaState::read(r)?),
            4 => Posterior::Ella(EllaState::read(r)?),
            k => return Err(Error::format(format!("unknown posterior tag {k}"))),
        })
    }
}

/// A posterior together with the data normalization it was fitted under.
#[derive(Clone, Debug)]
pub struct StateFile {
    pub posterior: Posterior,
    pub normalization: Option<Normalization>,
}

impl StateFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(STATE_MAGIC);
        w.u32(STATE_VERSION);
        match &self.normalization {
            Some(n) => {
                w.u8(1);
                n.encode(&mut w);
            }
            None => w.u8(0),
        }
        self.posterior.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<StateFile> {
        let mut r = ByteReader::new(bytes);
        r.header(STATE_MAGIC, STATE_VERSION)?;
        let normalization = match r.u8()? {
            0 => None,
            1 => Some(Normalization::decode(&mut r)?),
            k => return Err(Error::format(format!("bad normalization flag {k}"))),
        };
        let posterior = Posterior::read(&mut r)?;
        r.expect_end()?;
        Ok(StateFile {
            posterior,
            normalization,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<StateFile> {
        StateFile::from_bytes(&read_file(path)?)
    }

    /// Predictions at raw inputs, mapped back to raw target units.
    pub fn predict_raw(&self, x: &Matrix) -> Result<Predictions> {
        match &self.normalization {
            None => self.posterior.predict(x),
            Some(n) => {
                let pred = self.posterior.predict(&n.transform_inputs(x)?)?;
                Ok(if pred.likelihood.is_categorical() {
                    pred
                } else {
                    pred.unstandardize(&n.target_mean, &n.target_std)
                })
            }
        }
    }
}
