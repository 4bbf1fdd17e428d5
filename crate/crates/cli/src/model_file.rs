//! Versioned model files holding a fitted encoder and its one-vs-all SVM.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "STIMM1", u32 version
//! u32 id length, id bytes
//! u8 encoder tag (0 histogram, 1 bow, 2 rcc, 3 ifv)
//!   bow/rcc: u64 seed, u64 K, u64 D, K*D f64 centres
//!   rcc:     u32 cell size, f64 radius
//!   ifv:     u64 K, u64 D, K f64 weights, K*D f64 means, K*D f64 variances
//! u64 classes, u64 D
//!   per class: u32 name length, name bytes
//!   per class: f64 C, u8 degenerate, f64 bias, D f64 weights
//! ```

use vistim_core::classifier::{BinaryLinearModel, MultiClassModel, TrainDiagnostics};
use vistim_core::encoding::{Codebook, GaussianMixture, RccParams};
use vistim_core::evaluation::{EncoderState, FittedPipeline};

pub const MAGIC: &[u8; 6] = b"STIMM1";
pub const VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.0.extend_from_slice(&x.to_le_bytes()));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn codebook(&mut self, c: &Codebook) {
        self.u64(c.seed);
        self.u64(c.k() as u64);
        self.u64(c.dimension() as u64);
        self.f64s(c.centers());
    }
}

pub fn encode(model: &FittedPipeline) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.str(&model.id);
    match &model.encoder {
        EncoderState::Histogram => w.u8(0),
        EncoderState::Bow(c) => {
            w.u8(1);
            w.codebook(c);
        }
        EncoderState::Rcc(c, p) => {
            w.u8(2);
            w.codebook(c);
            w.u32(p.cell_size);
            w.f64s(&[p.radius]);
        }
        EncoderState::Ifv(g) => {
            w.u8(3);
            w.u64(g.k() as u64);
            w.u64(g.dimension() as u64);
            w.f64s(g.weights());
            w.f64s(g.means());
            w.f64s(g.variances());
        }
    }
    let m = &model.model;
    w.u64(m.classes.len() as u64);
    w.u64(m.dimension as u64);
    m.classes.iter().for_each(|c| w.str(c));
    for b in &m.models {
        w.f64s(&[b.c]);
        w.u8(b.degenerate as u8);
        w.f64s(&[b.bias]);
        w.f64s(&b.weights);
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated model file")?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "length overflow".to_string())
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    }
    fn str(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "string is not UTF-8".into())
    }
    fn codebook(&mut self) -> Result<Codebook, String> {
        let seed = self.u64()?;
        let (k, d) = (self.len()?, self.len()?);
        let centers = self.f64s(k * d)?;
        Codebook::from_centers(k, d, centers, seed).map_err(|e| e.to_string())
    }
}

pub fn decode(bytes: &[u8]) -> Result<FittedPipeline, String> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported model version {version}"));
    }
    let id = r.str()?;
    let encoder = match r.u8()? {
        0 => EncoderState::Histogram,
        1 => EncoderState::Bow(r.codebook()?),
        2 => {
            let c = r.codebook()?;
            let cell_size = r.u32()?;
            let radius = r.f64s(1)?[0];
            EncoderState::Rcc(c, RccParams { cell_size, radius })
        }
        3 => {
            let (k, d) = (r.len()?, r.len()?);
            let weights = r.f64s(k)?;
            let means = r.f64s(k * d)?;
            let variances = r.f64s(k * d)?;
            EncoderState::Ifv(GaussianMixture::new(k, d, weights, means, variances).map_err(|e| e.to_string())?)
        }
        t => return Err(format!("unknown encoder tag {t}")),
    };
    let (n, d) = (r.len()?, r.len()?);
    let classes = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    let mut models = Vec::with_capacity(n);
    for _ in 0..n {
        let c = r.f64s(1)?[0];
        let degenerate = r.u8()? != 0;
        let bias = r.f64s(1)?[0];
        let weights = r.f64s(d)?;
        models.push(BinaryLinearModel {
            weights,
            bias,
            c,
            degenerate,
            diagnostics: TrainDiagnostics::default(),
        });
    }
    if r.at != bytes.len() {
        return Err("trailing bytes after model".into());
    }
    Ok(FittedPipeline {
        id,
        encoder,
        model: MultiClassModel {
            classes,
            models,
            dimension: d,
        },
    })
}
