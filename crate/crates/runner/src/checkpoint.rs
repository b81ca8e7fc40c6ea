//! Binary dynamics-model checkpoints.
//!
//! All integers are little-endian `u64`, all floats little-endian `f64`:
//!
//! ```text
//! magic "SRLMODEL" | version
//! input_dim | n_hidden | hidden.. | output_dim | init seed | log_std min | log_std max
//! n_segments | per segment: name_len | name bytes | n_dims | dims.. | offset
//! n_params | params..
//! input_mean.. | input_std.. | target_mean.. | target_std..
//! ```

use std::io::{self, Read, Write};

use surprise_core::dist::LogStdBounds;
use surprise_core::dynamics::{DynamicsModel, Normalizer};
use surprise_core::numkit::{MlpSpec, ParamLayout, ParamVector, Segment};

pub const MAGIC: &[u8; 8] = b"SRLMODEL";
pub const VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a model checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u64),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] surprise_core::Error),
}

fn put_u64(w: &mut impl Write, x: u64) -> io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> io::Result<()> {
    xs.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
}

pub fn write_model(w: &mut impl Write, model: &DynamicsModel) -> io::Result<()> {
    let spec = model.spec();
    w.write_all(MAGIC)?;
    put_u64(w, VERSION)?;
    put_u64(w, spec.input_dim as u64)?;
    put_u64(w, spec.hidden_sizes.len() as u64)?;
    for &h in &spec.hidden_sizes {
        put_u64(w, h as u64)?;
    }
    put_u64(w, spec.output_dim as u64)?;
    put_u64(w, spec.seed)?;
    put_f64s(w, &[model.bounds().min, model.bounds().max])?;

    let params = model.params();
    let segments = params.layout().segments();
    put_u64(w, segments.len() as u64)?;
    for s in segments {
        put_u64(w, s.name.len() as u64)?;
        w.write_all(s.name.as_bytes())?;
        put_u64(w, s.shape.len() as u64)?;
        for &d in &s.shape {
            put_u64(w, d as u64)?;
        }
        put_u64(w, s.offset as u64)?;
    }
    put_u64(w, params.len() as u64)?;
    put_f64s(w, params.data())?;

    let n = model.normalizer();
    put_f64s(w, &n.input_mean)?;
    put_f64s(w, &n.input_std)?;
    put_f64s(w, &n.target_mean)?;
    put_f64s(w, &n.target_std)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    /// A count that must not exceed `limit`, guarding allocations.
    fn count(&mut self, limit: u64, what: &str) -> Result<usize, CheckpointError> {
        let n = self.u64()?;
        if n > limit {
            return Err(CheckpointError::Corrupt(format!("{what} = {n}")));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        (0..n)
            .map(|_| {
                let mut b = [0u8; 8];
                self.inner.read_exact(&mut b)?;
                Ok(f64::from_le_bytes(b))
            })
            .collect()
    }
}

const MAX_DIM: u64 = 1 << 24;

pub fn read_model(r: impl Read) -> Result<DynamicsModel, CheckpointError> {
    let mut c = Cursor { inner: r };
    let mut magic = [0u8; 8];
    c.inner.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = c.u64()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let input_dim = c.count(MAX_DIM, "input_dim")?;
    let n_hidden = c.count(1024, "hidden layer count")?;
    let hidden = (0..n_hidden)
        .map(|_| c.count(MAX_DIM, "hidden width"))
        .collect::<Result<Vec<_>, _>>()?;
    let output_dim = c.count(MAX_DIM, "output_dim")?;
    let seed = c.u64()?;
    let b = c.f64s(2)?;
    let bounds = LogStdBounds { min: b[0], max: b[1] };

    let n_segments = c.count(4096, "segment count")?;
    let mut segments = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let len = c.count(4096, "segment name length")?;
        let mut name = vec![0u8; len];
        c.inner.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Corrupt("segment name".into()))?;
        let n_dims = c.count(8, "segment rank")?;
        let shape = (0..n_dims)
            .map(|_| c.count(MAX_DIM, "segment dim"))
            .collect::<Result<Vec<_>, _>>()?;
        let offset = c.count(u32::MAX as u64, "segment offset")?;
        segments.push(Segment { name, shape, offset });
    }
    let layout = ParamLayout::from_segments(segments)?;
    let n_params = c.count(u32::MAX as u64, "parameter count")?;
    let params = ParamVector::new(layout, c.f64s(n_params)?)?;

    if output_dim % 2 != 0 || input_dim < output_dim / 2 {
        return Err(CheckpointError::Corrupt("network dimensions".into()));
    }
    let state_dim = output_dim / 2;
    let normalizer = Normalizer {
        input_mean: c.f64s(input_dim)?,
        input_std: c.f64s(input_dim)?,
        target_mean: c.f64s(state_dim)?,
        target_std: c.f64s(state_dim)?,
    };
    let spec = MlpSpec::new(input_dim, hidden, output_dim, seed);
    Ok(DynamicsModel::from_parts(spec, params, normalizer, bounds)?)
}
