//! NTF1 tensor files, PGM mask import and evaluation reports.
//!
//! NTF1 layout: `"NTF1"`, dtype byte (1 = u8, 2 = f32, 3 = f64), ndim byte,
//! two zero bytes, `ndim` little-endian `u32` dims, then the row-major
//! little-endian payload. Nothing may follow the payload.
//!
//! Probability maps are stored with the class axis last, so a map over
//! spatial dims `d` with `C` classes has dims `d ++ [C]`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};
use crate::loss::{Family, LossSpec};
use crate::tensor::{BinaryMask, Flag, LabelMap, LossConfig, OneHot, ProbMap, Shape, SIMPLEX_TOL};

pub const MAGIC: &[u8; 4] = b"NTF1";
const HEADER_FIXED: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8,
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 2,
            Dtype::F64 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::U8),
            2 => Some(Dtype::F32),
            3 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let t = Self { dims, data };
        if t.dims.is_empty() || t.dims.len() > u8::MAX as usize {
            return Err(Error::InvalidShape(format!("tensor rank {} not in 1..=255", t.dims.len())));
        }
        if let Some(d) = t.dims.iter().find(|&&d| d > u32::MAX as usize) {
            return Err(Error::InvalidShape(format!("dim {d} does not fit in u32")));
        }
        let n: usize = t.dims.iter().product();
        if n != t.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} elements for dims {:?}", t.dims),
                got: format!("{} elements", t.len()),
            });
        }
        Ok(t)
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::U8(_) => Dtype::U8,
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::U8(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_labels(labels: &LabelMap) -> Result<Self> {
        let data = labels
            .values()
            .iter()
            .map(|&l| u8::try_from(l).map_err(|_| Error::InvalidParameter(format!("label {l} does not fit in u8"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels.shape().dims().to_vec(), TensorData::U8(data))
    }

    pub fn from_probs(s: &ProbMap) -> Self {
        let mut dims = s.shape().dims().to_vec();
        dims.push(s.shape().classes());
        Self {
            dims,
            data: TensorData::F64(s.values().to_vec()),
        }
    }

    pub fn from_mask(m: &BinaryMask) -> Self {
        Self {
            dims: m.dims().to_vec(),
            data: TensorData::U8(m.values().iter().map(|&b| u8::from(b)).collect()),
        }
    }

    pub fn from_f64(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        Self::new(dims.to_vec(), TensorData::F64(values))
    }

    fn mismatch(&self, expected: &'static str) -> FormatError {
        FormatError::DtypeMismatch {
            expected,
            found: self.dtype().name(),
        }
    }

    /// Values widened to f64, for any dtype.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    /// u8 tensor as class labels over its dims.
    pub fn into_labels(self, classes: usize) -> Result<LabelMap> {
        let TensorData::U8(v) = &self.data else {
            return Err(format_error("<tensor>", self.mismatch("u8")));
        };
        let shape = Shape::new(&self.dims, classes)?;
        LabelMap::new(shape, v.iter().map(|&x| usize::from(x)).collect())
    }

    /// u8 tensor as a mask; nonzero entries are set.
    pub fn into_mask(self) -> Result<BinaryMask> {
        let TensorData::U8(v) = &self.data else {
            return Err(format_error("<tensor>", self.mismatch("u8")));
        };
        BinaryMask::from_bits(&self.dims, v)
    }

    /// Float tensor with the class axis last, validated as a probability map.
    pub fn into_probs(self) -> Result<ProbMap> {
        let values = match self.data {
            TensorData::F32(ref v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(ref v) => v.clone(),
            TensorData::U8(_) => return Err(format_error("<tensor>", self.mismatch("f32 or f64"))),
        };
        if self.dims.len() < 2 {
            return Err(Error::InvalidShape(
                "probability tensors need spatial dims plus a trailing class axis".into(),
            ));
        }
        let (spatial, classes) = self.dims.split_at(self.dims.len() - 1);
        let shape = Shape::new(spatial, classes[0])?;
        // f32 inputs carry ~1e-7 rounding in each row sum.
        let tol = if self.dtype() == Dtype::F32 { 1e-6 } else { SIMPLEX_TOL };
        let s = ProbMap::from_raw(shape, values)?;
        s.validate(tol)?;
        Ok(s)
    }
}

fn format_error(path: &str, source: FormatError) -> Error {
    Error::Format {
        path: path.to_string(),
        source,
    }
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_FIXED + 4 * t.dims.len() + t.len() * t.dtype().size());
    out.extend_from_slice(MAGIC);
    out.push(t.dtype().code());
    out.push(t.dims.len() as u8);
    out.extend_from_slice(&[0, 0]);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match &t.data {
        TensorData::U8(v) => out.extend_from_slice(v),
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        let k = bytes.len().min(4);
        found[..k].copy_from_slice(&bytes[..k]);
        return Err(FormatError::BadMagic { found });
    }
    if bytes.len() < HEADER_FIXED {
        return Err(FormatError::Truncated {
            offset: 4,
            expected: HEADER_FIXED - 4,
            found: bytes.len() - 4,
        });
    }
    let dtype = Dtype::from_code(bytes[4]).ok_or(FormatError::UnknownDtype(bytes[4]))?;
    let ndim = bytes[5] as usize;
    if ndim == 0 {
        return Err(FormatError::BadHeader {
            offset: 5,
            reason: "ndim is 0".into(),
        });
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        let offset = if bytes[6] != 0 { 6 } else { 7 };
        return Err(FormatError::BadHeader {
            offset,
            reason: "reserved bytes must be zero".into(),
        });
    }
    let dims_end = HEADER_FIXED + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(FormatError::Truncated {
            offset: HEADER_FIXED,
            expected: 4 * ndim,
            found: bytes.len() - HEADER_FIXED,
        });
    }
    let dims: Vec<usize> = bytes[HEADER_FIXED..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
        .collect();
    if let Some(k) = dims.iter().position(|&d| d == 0) {
        return Err(FormatError::BadHeader {
            offset: HEADER_FIXED + 4 * k,
            reason: "zero-length dim".into(),
        });
    }
    let expected = dims
        .iter()
        .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::BadHeader {
            offset: HEADER_FIXED,
            reason: "payload size overflows".into(),
        })?;
    let payload = &bytes[dims_end..];
    if payload.len() < expected {
        return Err(FormatError::Truncated {
            offset: dims_end,
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingBytes {
            offset: dims_end + expected,
            count: payload.len() - expected,
        });
    }
    let data = match dtype {
        Dtype::U8 => TensorData::U8(payload.to_vec()),
        Dtype::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect(),
        ),
        Dtype::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ),
    };
    Ok(Tensor { dims, data })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode(&read_bytes(path)?).map_err(|e| format_error(&path.display().to_string(), e))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(t)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_labels(path: impl AsRef<Path>, classes: usize) -> Result<LabelMap> {
    let path = path.as_ref();
    with_path(path, read_tensor(path)?.into_labels(classes))
}

pub fn read_probs(path: impl AsRef<Path>) -> Result<ProbMap> {
    let path = path.as_ref();
    with_path(path, read_tensor(path)?.into_probs())
}

/// Reads a mask from an NTF1 u8 tensor or a binary PGM, chosen by content.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P") && !bytes.starts_with(MAGIC) {
        return decode_pgm(&bytes).map_err(|e| format_error(&path.display().to_string(), e));
    }
    let t = decode(&bytes).map_err(|e| format_error(&path.display().to_string(), e))?;
    with_path(path, t.into_mask())
}

/// Re-labels format errors raised by tensor conversions with the file path;
/// other errors pass through unchanged.
fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { source, .. } => format_error(&path.display().to_string(), source),
        e => e,
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    decode_pgm(&read_bytes(path)?).map_err(|e| format_error(&path.display().to_string(), e))
}

/// Binary PGM (`P5`, maxval 255) to a `[height, width]` mask; nonzero is set.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<BinaryMask, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(FormatError::Unsupported(format!("expected binary PGM magic P5, found {head:?}")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // Whitespace and comments before each header field.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let name = ["width", "height", "maxval"][k];
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| FormatError::BadHeader {
                offset: start,
                reason: format!("expected positive {name}"),
            })?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(FormatError::BadHeader {
                offset: pos,
                reason: "expected a single whitespace byte before the raster".into(),
            })
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(FormatError::Unsupported(format!("maxval {maxval}; only 255 is supported")));
    }
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(FormatError::Truncated {
            offset: pos,
            expected,
            found: raster.len(),
        });
    }
    if raster.len() > expected {
        return Err(FormatError::TrailingBytes {
            offset: pos + expected,
            count: raster.len() - expected,
        });
    }
    BinaryMask::from_bits(&[height, width], raster).map_err(|e| FormatError::BadHeader {
        offset: 2,
        reason: e.to_string(),
    })
}

/// Binary PGM bytes for a 2D mask (set pixels become 255).
pub fn encode_pgm(mask: &BinaryMask) -> Result<Vec<u8>> {
    let [h, w] = mask.dims() else {
        return Err(Error::InvalidShape("PGM images are 2D".into()));
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.values().iter().map(|&b| if b { 255 } else { 0 }));
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Settings read from an evaluation config file. Every field is optional;
/// `losses` maps a loss name to its parameter object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub loss_config: LossConfig,
    /// Pixel spacing per spatial axis; unit spacing when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Vec<f64>>,
    pub losses: BTreeMap<String, serde_json::Value>,
}

impl EvalConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.loss_config.validate()?;
        for name in cfg.losses.keys() {
            LossSpec::by_name(name)?;
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = String::from_utf8(read_bytes(path)?).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::InvalidParameter(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Loss spec for `name` with any configured parameter overrides.
    pub fn spec(&self, name: &str) -> Result<LossSpec> {
        let default = LossSpec::by_name(name)?;
        let Some(overrides) = self.losses.get(name) else {
            return Ok(default);
        };
        let mut v = serde_json::to_value(&default).expect("specs serialize");
        let (Some(obj), Some(over)) = (v.as_object_mut(), overrides.as_object()) else {
            return Err(Error::InvalidParameter(format!("parameters for {name} must be an object")));
        };
        for (k, val) in over {
            obj.insert(k.clone(), val.clone());
        }
        serde_json::from_value(v).map_err(|e| Error::InvalidParameter(format!("parameters for {name}: {e}")))
    }
}

/// Parses `"all"` or a comma-separated list of loss names.
pub fn parse_loss_list(list: &str) -> Result<Vec<String>> {
    let names: Vec<String> = if list.trim() == "all" {
        crate::loss::LOSS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    };
    if names.is_empty() {
        return Err(Error::InvalidParameter("no loss requested".into()));
    }
    for n in &names {
        LossSpec::by_name(n)?;
    }
    Ok(names)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

impl InputDigest {
    pub fn of_file(role: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        Ok(Self {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalEntry {
    pub loss: String,
    pub family: Family,
    pub params: serde_json::Value,
    /// Absent when evaluation failed.
    pub value: Option<f64>,
    pub flags: Vec<Flag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The failure was a degenerate input rather than malformed data.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub inputs: Vec<InputDigest>,
    pub config: EvalConfig,
    pub spacing: Vec<f64>,
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    pub fn failed(&self) -> bool {
        self.entries.iter().any(|e| e.error.is_some())
    }

    /// Every failure, if any, came from degenerate input.
    pub fn only_degenerate_failures(&self) -> bool {
        self.failed() && self.entries.iter().all(|e| e.error.is_none() || e.degenerate)
    }

    /// JSON with shortest round-trip float formatting, so values parse back
    /// to the same bits.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per loss: `loss,family,value,flags,error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("loss,family,value,flags,error\n");
        for e in &self.entries {
            let value = e.value.map(|v| format!("{v:?}")).unwrap_or_default();
            let flags = e
                .flags
                .iter()
                .map(|f| match f {
                    Flag::EmptySelection => "empty_selection".to_string(),
                    Flag::DegenerateClass(c) => format!("degenerate_class:{c}"),
                    Flag::DegeneratePrediction(c) => format!("degenerate_prediction:{c}"),
                })
                .collect::<Vec<_>>()
                .join(";");
            let family = serde_json::to_value(e.family).expect("family serializes");
            let error = e.error.as_deref().unwrap_or("").replace('"', "\"\"");
            out.push_str(&format!(
                "{},{},{},{},\"{}\"\n",
                e.loss,
                family.as_str().unwrap_or(""),
                value,
                flags,
                error
            ));
        }
        out
    }
}

/// Evaluates each named loss on `(g, s)`. Losses are independent and may run
/// concurrently; entries follow the order of `names`.
pub fn evaluate_losses(
    names: &[String],
    g: &OneHot,
    s: &ProbMap,
    config: &EvalConfig,
    exec: crate::exec::Exec,
) -> Result<(Vec<f64>, Vec<EvalEntry>)> {
    let spacing = match &config.spacing {
        Some(sp) => sp.clone(),
        None => vec![1.0; g.shape().dims().len()],
    };
    let specs = names.iter().map(|n| config.spec(n)).collect::<Result<Vec<_>>>()?;
    let entries = exec.map(specs.len(), |k| {
        let spec = &specs[k];
        let r = spec.evaluate(g, s, &spacing, &config.loss_config);
        let (value, flags, error, degenerate) = match r {
            Ok(r) => (Some(r.value), r.flags, None, false),
            Err(e) => (None, Vec::new(), Some(e.to_string()), e.is_degenerate()),
        };
        EvalEntry {
            loss: spec.name().to_string(),
            family: spec.family(),
            params: spec.params_json(),
            value,
            flags,
            error,
            degenerate,
        }
    });
    Ok((spacing, entries))
}
