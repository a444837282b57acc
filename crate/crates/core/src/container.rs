//! Compressed byte format and raw-array I/O.
//!
//! All integers are little-endian. Layout:
//!
//! ```text
//! magic "TCKZ" | version u8
//! dtype u8 | precision u8 | d u8 | sizes u64×d | ranks u64×d
//! processing order u8×d | storage order u8×d | method u8 | coder u8
//! split u8 | weighting u8 | rtmss f64 | target sse f64 | block size u64
//! k i32 | zero flag u8
//! truncation sse f64 | core sse f64 | factor sse f64 | estimate f64 | ‖A‖² f64
//! core section:        u64 length | core payload
//! factor sections ×d:  u64 length | factor payload   (natural mode order)
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::corecodec::{read_payload, write_payload, Cursor, EncodedCore};
use crate::entropy::CoderKind;
use crate::error::{Error, Result};
use crate::factorcodec::{read_factor_payload, write_factor_payload, FactorPayload, FactorWeighting};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, ModePermutation};
use crate::vectorize::{VectorizationMethod, VectorizationSpec};

pub const MAGIC: [u8; 4] = *b"TCKZ";
pub const FORMAT_VERSION: u8 = 1;

/// Element type of raw input and output arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DataType {
    I8 = 0,
    U8 = 1,
    I16 = 2,
    U16 = 3,
    I32 = 4,
    U32 = 5,
    I64 = 6,
    U64 = 7,
    F32 = 8,
    F64 = 9,
}

impl DataType {
    pub const ALL: [DataType; 10] = [
        DataType::I8,
        DataType::U8,
        DataType::I16,
        DataType::U16,
        DataType::I32,
        DataType::U32,
        DataType::I64,
        DataType::U64,
        DataType::F32,
        DataType::F64,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL.get(id as usize).copied().ok_or(Error::UnknownDataType(id))
    }

    pub fn size(self) -> usize {
        match self {
            DataType::I8 | DataType::U8 => 1,
            DataType::I16 | DataType::U16 => 2,
            DataType::I32 | DataType::U32 | DataType::F32 => 4,
            DataType::I64 | DataType::U64 | DataType::F64 => 8,
        }
    }

    pub fn is_integral(self) -> bool {
        !matches!(self, DataType::F32 | DataType::F64)
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::I8 => "int8",
            DataType::U8 => "uint8",
            DataType::I16 => "int16",
            DataType::U16 => "uint16",
            DataType::I32 => "int32",
            DataType::U32 => "uint32",
            DataType::I64 => "int64",
            DataType::U64 => "uint64",
            DataType::F32 => "float32",
            DataType::F64 => "float64",
        }
    }

    /// Inclusive value range of integral types.
    fn range(self) -> (f64, f64) {
        match self {
            DataType::I8 => (i8::MIN as f64, i8::MAX as f64),
            DataType::U8 => (0.0, u8::MAX as f64),
            DataType::I16 => (i16::MIN as f64, i16::MAX as f64),
            DataType::U16 => (0.0, u16::MAX as f64),
            DataType::I32 => (i32::MIN as f64, i32::MAX as f64),
            DataType::U32 => (0.0, u32::MAX as f64),
            DataType::I64 => (i64::MIN as f64, i64::MAX as f64),
            DataType::U64 => (0.0, u64::MAX as f64),
            DataType::F32 => (f32::MIN as f64, f32::MAX as f64),
            DataType::F64 => (f64::MIN, f64::MAX),
        }
    }
}

impl FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = match s.to_ascii_lowercase().as_str() {
            "int8" | "i8" => DataType::I8,
            "uint8" | "u8" => DataType::U8,
            "int16" | "i16" => DataType::I16,
            "uint16" | "u16" => DataType::U16,
            "int32" | "i32" => DataType::I32,
            "uint32" | "u32" => DataType::U32,
            "int64" | "i64" => DataType::I64,
            "uint64" | "u64" => DataType::U64,
            "float32" | "f32" | "float" => DataType::F32,
            "float64" | "f64" | "double" => DataType::F64,
            other => return Err(Error::InvalidArgument(format!("unknown data type '{other}'"))),
        };
        Ok(t)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw array bytes with their declared layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceBuffer {
    pub bytes: Vec<u8>,
    pub dtype: DataType,
    pub shape: Vec<usize>,
    /// Leading bytes to ignore (a foreign file header).
    pub skip_bytes: usize,
}

/// Result of [`ingest`].
#[derive(Clone, Debug)]
pub struct Ingested<T> {
    pub tensor: DenseTensor<T>,
    /// Integer values that the working precision cannot hold exactly.
    pub inexact_values: usize,
}

fn read_value(dtype: DataType, b: &[u8]) -> (f64, bool) {
    macro_rules! int {
        ($t:ty) => {{
            let v = <$t>::from_le_bytes(b.try_into().expect("element width"));
            let f = v as f64;
            (f, f as i128 != v as i128 || f.abs() >= 2f64.powi(127))
        }};
    }
    match dtype {
        DataType::I8 => (b[0] as i8 as f64, false),
        DataType::U8 => (b[0] as f64, false),
        DataType::I16 => (i16::from_le_bytes([b[0], b[1]]) as f64, false),
        DataType::U16 => (u16::from_le_bytes([b[0], b[1]]) as f64, false),
        DataType::I32 => (i32::from_le_bytes(b.try_into().expect("4 bytes")) as f64, false),
        DataType::U32 => (u32::from_le_bytes(b.try_into().expect("4 bytes")) as f64, false),
        DataType::I64 => int!(i64),
        DataType::U64 => int!(u64),
        DataType::F32 => (f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64, false),
        DataType::F64 => (f64::from_le_bytes(b.try_into().expect("8 bytes")), false),
    }
}

/// Decodes raw little-endian elements into a tensor of working precision.
pub fn ingest<T: Scalar>(src: &SourceBuffer) -> Result<Ingested<T>> {
    let n: usize = src.shape.iter().product();
    let w = src.dtype.size();
    let expected = src
        .skip_bytes
        .checked_add(n.checked_mul(w).ok_or_else(|| Error::InvalidArgument("shape too large".into()))?)
        .ok_or_else(|| Error::InvalidArgument("shape too large".into()))?;
    if src.bytes.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{} bytes given, {} expected for {} {} values after {} skipped bytes",
            src.bytes.len(),
            expected,
            n,
            src.dtype,
            src.skip_bytes
        )));
    }
    let mut inexact = 0;
    let data: Vec<T> = src.bytes[src.skip_bytes..]
        .chunks_exact(w)
        .map(|c| {
            let (v, lossy) = read_value(src.dtype, c);
            let t = T::from_f64_lossy(v);
            if lossy || (src.dtype.is_integral() && t.to_f64_lossy() != v) {
                inexact += 1;
            }
            t
        })
        .collect();
    Ok(Ingested {
        tensor: DenseTensor::new(src.shape.clone(), data)?,
        inexact_values: inexact,
    })
}

/// Encodes a tensor as raw elements; integral types round to nearest and
/// clamp to their range.
pub fn emit<T: Scalar>(t: &DenseTensor<T>, dtype: DataType) -> SourceBuffer {
    let mut bytes = Vec::with_capacity(t.len() * dtype.size());
    let (lo, hi) = dtype.range();
    for &x in t.as_slice() {
        let v = x.to_f64_lossy();
        let r = if v.is_nan() { 0.0 } else { v.round().clamp(lo, hi) };
        match dtype {
            DataType::I8 => bytes.push(r as i8 as u8),
            DataType::U8 => bytes.push(r as u8),
            DataType::I16 => bytes.extend_from_slice(&(r as i16).to_le_bytes()),
            DataType::U16 => bytes.extend_from_slice(&(r as u16).to_le_bytes()),
            DataType::I32 => bytes.extend_from_slice(&(r as i32).to_le_bytes()),
            DataType::U32 => bytes.extend_from_slice(&(r as u32).to_le_bytes()),
            DataType::I64 => bytes.extend_from_slice(&(r as i64).to_le_bytes()),
            DataType::U64 => bytes.extend_from_slice(&(r as u64).to_le_bytes()),
            DataType::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            DataType::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
        }
    }
    SourceBuffer {
        bytes,
        dtype,
        shape: t.shape().to_vec(),
        skip_bytes: 0,
    }
}

/// Error components recorded at compression time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AchievedRecord {
    pub truncation_sse: f64,
    pub core_quantization_sse: f64,
    pub factor_sse: f64,
    pub estimate_total_sse: f64,
    pub norm_sq: f64,
}

impl AchievedRecord {
    /// Relative error implied by the recorded estimate.
    pub fn estimated_relative_error(&self) -> f64 {
        if self.norm_sq > 0.0 {
            (self.estimate_total_sse / self.norm_sq).sqrt()
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub dtype: DataType,
    /// Working precision in bits (32 or 64).
    pub precision: u8,
    pub mode_sizes: Vec<usize>,
    pub ranks: Vec<usize>,
    pub processing_order: ModePermutation,
    pub vectorization: VectorizationSpec,
    pub coder: CoderKind,
    pub split: bool,
    pub weighting: FactorWeighting,
    pub rtmss: f64,
    pub target_sse: f64,
    pub block_size: usize,
    pub scale_exponent: i32,
    pub zero_flag: bool,
    pub achieved: AchievedRecord,
}

impl ContainerHeader {
    pub fn order(&self) -> usize {
        self.mode_sizes.len()
    }

    pub fn element_count(&self) -> usize {
        self.mode_sizes.iter().product()
    }

    pub fn original_bytes(&self) -> usize {
        self.element_count() * self.dtype.size()
    }

    /// Core shape in its stored (processing) order.
    pub fn core_shape(&self) -> Vec<usize> {
        self.processing_order.apply(&self.ranks)
    }
}

/// A parsed compressed file.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub header: ContainerHeader,
    pub core: EncodedCore,
    /// Indexed by natural mode.
    pub factors: Vec<FactorPayload>,
}

fn perm_bytes(p: &ModePermutation, out: &mut Vec<u8>) {
    out.extend(p.as_slice().iter().map(|&i| i as u8));
}

fn write_header(h: &ContainerHeader, out: &mut Vec<u8>) -> Result<()> {
    let d = h.order();
    if d == 0 || d > u8::MAX as usize || h.ranks.len() != d {
        return Err(Error::InvalidArgument(format!("unsupported tensor order {d}")));
    }
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.push(h.dtype.id());
    out.push(h.precision);
    out.push(d as u8);
    for &n in h.mode_sizes.iter().chain(&h.ranks) {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    perm_bytes(&h.processing_order, out);
    perm_bytes(&h.vectorization.storage_order, out);
    out.push(h.vectorization.method.id());
    out.push(h.coder.id());
    out.push(h.split as u8);
    out.push(h.weighting.id());
    for v in [h.rtmss, h.target_sse] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(h.block_size as u64).to_le_bytes());
    out.extend_from_slice(&h.scale_exponent.to_le_bytes());
    out.push(h.zero_flag as u8);
    let a = &h.achieved;
    for v in [a.truncation_sse, a.core_quantization_sse, a.factor_sse, a.estimate_total_sse, a.norm_sq] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn read_perm(c: &mut Cursor<'_>, d: usize, what: &str) -> Result<ModePermutation> {
    let b = c.take(d, what)?;
    ModePermutation::new(b.iter().map(|&i| i as usize).collect())
        .map_err(|_| Error::corrupt("header", format!("invalid {what}")))
}

fn read_flag(c: &mut Cursor<'_>, what: &str) -> Result<bool> {
    match c.u8(what)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(Error::corrupt("header", format!("invalid {what} {v}"))),
    }
}

fn read_header(c: &mut Cursor<'_>) -> Result<ContainerHeader> {
    let magic: [u8; 4] = c.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = c.u8("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = DataType::from_id(c.u8("header data type")?)?;
    let precision = c.u8("header precision")?;
    if precision != 32 && precision != 64 {
        return Err(Error::corrupt("header", format!("invalid precision {precision}")));
    }
    let d = c.u8("header order")? as usize;
    if d == 0 {
        return Err(Error::corrupt("header", "tensor order 0"));
    }
    let mut dims = Vec::with_capacity(2 * d);
    for _ in 0..2 * d {
        dims.push(c.u64("header mode sizes")? as usize);
    }
    let ranks = dims.split_off(d);
    let mode_sizes = dims;
    if mode_sizes.iter().zip(&ranks).any(|(&n, &r)| n == 0 || r == 0 || r > n) {
        return Err(Error::corrupt("header", "ranks inconsistent with mode sizes"));
    }
    mode_sizes
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::corrupt("header", "element count overflows"))?;
    let processing_order = read_perm(c, d, "header processing order")?;
    let storage_order = read_perm(c, d, "header storage order")?;
    let method_id = c.u8("header vectorization")?;
    let method = VectorizationMethod::from_id(method_id)
        .ok_or_else(|| Error::corrupt("header", format!("unknown vectorization {method_id}")))?;
    let coder_id = c.u8("header coder")?;
    let coder = CoderKind::from_id(coder_id)
        .ok_or_else(|| Error::corrupt("header", format!("unknown coder {coder_id}")))?;
    let split = read_flag(c, "header split flag")?;
    let weighting_id = c.u8("header weighting")?;
    let weighting = FactorWeighting::from_id(weighting_id)
        .ok_or_else(|| Error::corrupt("header", format!("unknown weighting {weighting_id}")))?;
    let rtmss = c.f64("header rtmss")?;
    let target_sse = c.f64("header target")?;
    let block_size = c.u64("header block size")? as usize;
    let scale_exponent = i32::from_le_bytes(c.take(4, "header scale exponent")?.try_into().expect("4 bytes"));
    let zero_flag = read_flag(c, "header zero flag")?;
    let mut rec = [0.0; 5];
    for v in rec.iter_mut() {
        *v = c.f64("header error record")?;
    }
    Ok(ContainerHeader {
        dtype,
        precision,
        mode_sizes,
        ranks,
        processing_order,
        vectorization: VectorizationSpec {
            method,
            storage_order,
        },
        coder,
        split,
        weighting,
        rtmss,
        target_sse,
        block_size,
        scale_exponent,
        zero_flag,
        achieved: AchievedRecord {
            truncation_sse: rec[0],
            core_quantization_sse: rec[1],
            factor_sse: rec[2],
            estimate_total_sse: rec[3],
            norm_sq: rec[4],
        },
    })
}

fn write_section(out: &mut Vec<u8>, body: &[u8]) {
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(body);
}

pub fn write_container(c: &Container) -> Result<Vec<u8>> {
    if c.factors.len() != c.header.order() {
        return Err(Error::ShapeMismatch(format!(
            "{} factor payloads for order {}",
            c.factors.len(),
            c.header.order()
        )));
    }
    let mut out = Vec::new();
    write_header(&c.header, &mut out)?;
    let mut body = Vec::new();
    write_payload(&c.core, &mut body)?;
    write_section(&mut out, &body);
    for f in &c.factors {
        body.clear();
        write_factor_payload(f, &mut body)?;
        write_section(&mut out, &body);
    }
    Ok(out)
}

fn read_section<'a>(c: &mut Cursor<'a>, name: &str) -> Result<&'a [u8]> {
    let len = c.u64(&format!("{name} length"))?;
    if len > c.remaining() as u64 {
        return Err(Error::Truncated(format!("{name} ({len} bytes declared, {} present)", c.remaining())));
    }
    c.take(len as usize, name)
}

pub fn read_container(bytes: &[u8]) -> Result<Container> {
    let mut c = Cursor::new(bytes);
    let header = read_header(&mut c)?;
    let core = read_payload(read_section(&mut c, "core section")?, "core section")?;
    let n_core: usize = header.ranks.iter().product();
    if core.n_coeffs != n_core {
        return Err(Error::corrupt(
            "core section",
            format!("{} coefficients for {n_core} core cells", core.n_coeffs),
        ));
    }
    let mut factors = Vec::with_capacity(header.order());
    for (i, &r) in header.ranks.iter().enumerate() {
        let name = format!("factor section {i}");
        let body = read_section(&mut c, &name)?;
        factors.push(read_factor_payload(body, r, &name)?);
    }
    if c.remaining() != 0 {
        return Err(Error::corrupt("container", "trailing bytes after the last section"));
    }
    Ok(Container { header, core, factors })
}

pub fn write_file(path: impl AsRef<Path>, c: &Container) -> Result<()> {
    std::fs::write(path, write_container(c)?)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Container> {
    read_container(&std::fs::read(path)?)
}
