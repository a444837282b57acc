//! Orders in which the core is flattened into rows of the bit matrix.
//!
//! The core is first transposed into a storage order, then walked with one of
//! three iterators: lexicographic (last index fastest), zigzag (by layer of
//! constant coordinate sum, lexicographic inside a layer) or Z-order (Morton
//! key order, skipping keys outside a non-power-of-two grid).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{strides, ModePermutation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum VectorizationMethod {
    #[default]
    Lexicographic = 0,
    Zigzag = 1,
    ZOrder = 2,
}

impl VectorizationMethod {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Self::Lexicographic),
            1 => Some(Self::Zigzag),
            2 => Some(Self::ZOrder),
            _ => None,
        }
    }
}

impl FromStr for VectorizationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lex" | "lexicographic" => Ok(Self::Lexicographic),
            "zigzag" => Ok(Self::Zigzag),
            "zorder" | "z-order" | "morton" => Ok(Self::ZOrder),
            other => Err(Error::InvalidArgument(format!(
                "unknown vectorization '{other}'"
            ))),
        }
    }
}

impl fmt::Display for VectorizationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lexicographic => "lex",
            Self::Zigzag => "zigzag",
            Self::ZOrder => "zorder",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorizationSpec {
    pub method: VectorizationMethod,
    /// Applied to the core (as [`DenseTensor::transpose`](crate::DenseTensor::transpose)) before flattening.
    pub storage_order: ModePermutation,
}

impl VectorizationSpec {
    /// Lexicographic walk with the shortest-mode-first storage order.
    pub fn default_for(core_shape: &[usize]) -> Self {
        Self {
            method: VectorizationMethod::Lexicographic,
            storage_order: storage_order_heuristic(core_shape),
        }
    }
}

/// Stable ascending sort of the core modes by size.
pub fn storage_order_heuristic(core_mode_sizes: &[usize]) -> ModePermutation {
    let mut idx: Vec<usize> = (0..core_mode_sizes.len()).collect();
    idx.sort_by_key(|&i| core_mode_sizes[i]);
    ModePermutation::new(idx).expect("sorted indices form a permutation")
}

pub fn first_position(method: VectorizationMethod, shape: &[usize]) -> Option<Vec<usize>> {
    if shape.is_empty() || shape.contains(&0) {
        return None;
    }
    let _ = method;
    Some(vec![0; shape.len()])
}

/// Position following `current`, or `None` after the last cell.
pub fn next_position(
    method: VectorizationMethod,
    current: &[usize],
    shape: &[usize],
) -> Result<Option<Vec<usize>>> {
    if current.len() != shape.len() || current.iter().zip(shape).any(|(&c, &n)| c >= n) {
        return Err(Error::InvalidArgument(format!(
            "position {current:?} outside shape {shape:?}"
        )));
    }
    let mut pos = current.to_vec();
    let more = match method {
        VectorizationMethod::Lexicographic => next_lexicographic(&mut pos, shape),
        VectorizationMethod::Zigzag => next_zigzag(&mut pos, shape),
        VectorizationMethod::ZOrder => next_zorder(&mut pos, shape),
    };
    Ok(more.then_some(pos))
}

fn next_lexicographic(pos: &mut [usize], shape: &[usize]) -> bool {
    for i in (0..pos.len()).rev() {
        pos[i] += 1;
        if pos[i] < shape[i] {
            return true;
        }
        pos[i] = 0;
    }
    false
}

/// Lexicographically smallest in-bounds vector with coordinate sum `sum`
/// written into `pos[from..]`.
fn fill_smallest(pos: &mut [usize], shape: &[usize], from: usize, mut sum: usize) {
    for j in (from..pos.len()).rev() {
        let v = sum.min(shape[j] - 1);
        pos[j] = v;
        sum -= v;
    }
    debug_assert_eq!(sum, 0);
}

fn next_zigzag(pos: &mut [usize], shape: &[usize]) -> bool {
    let d = pos.len();
    let total: usize = pos.iter().sum();
    // capacity[i] = Σ_{j ≥ i} (n_j − 1)
    let mut capacity = vec![0usize; d + 1];
    for i in (0..d).rev() {
        capacity[i] = capacity[i + 1] + shape[i] - 1;
    }
    let mut prefix: usize = total;
    for i in (0..d).rev() {
        // prefix = Σ_{j ≤ i} pos[j]
        if pos[i] + 1 < shape[i] {
            let used = prefix + 1;
            if used <= total {
                let rest = total - used;
                if rest <= capacity[i + 1] {
                    pos[i] += 1;
                    fill_smallest(pos, shape, i + 1, rest);
                    return true;
                }
            }
        }
        prefix -= pos[i];
    }
    if total + 1 > capacity[0] {
        return false;
    }
    fill_smallest(pos, shape, 0, total + 1);
    true
}

/// Bits per coordinate needed to cover every mode.
fn zorder_levels(shape: &[usize]) -> u32 {
    shape
        .iter()
        .map(|&n| usize::BITS - (n.max(1) - 1).leading_zeros())
        .max()
        .unwrap_or(0)
}

/// Interleaves coordinate bits; mode 0 supplies the most significant bit of
/// every group of `d` bits.
pub fn morton_encode(pos: &[usize], levels: u32) -> u128 {
    let d = pos.len() as u32;
    let mut key = 0u128;
    for level in 0..levels {
        for (m, &c) in pos.iter().enumerate() {
            let bit = ((c >> level) & 1) as u128;
            key |= bit << (level * d + (d - 1 - m as u32));
        }
    }
    key
}

pub fn morton_decode(key: u128, d: usize, levels: u32) -> Vec<usize> {
    let dd = d as u32;
    let mut pos = vec![0usize; d];
    for level in 0..levels {
        for (m, p) in pos.iter_mut().enumerate() {
            let bit = (key >> (level * dd + (dd - 1 - m as u32))) & 1;
            *p |= (bit as usize) << level;
        }
    }
    pos
}

fn next_zorder(pos: &mut [usize], shape: &[usize]) -> bool {
    let d = shape.len();
    let levels = zorder_levels(shape);
    let bits = levels * d as u32;
    if bits == 0 {
        return false;
    }
    let end: u128 = if bits >= 128 { u128::MAX } else { 1u128 << bits };
    let mut key = morton_encode(pos, levels) + 1;
    while key < end {
        let cand = morton_decode(key, d, levels);
        let mut jump: Option<u32> = None;
        for (m, (&c, &n)) in cand.iter().zip(shape).enumerate() {
            let limit = n - 1;
            if c > limit {
                // highest differing bit: c has 1 where the limit has 0, so the
                // whole subcube below that key bit is out of range
                let level = usize::BITS - 1 - (c ^ limit).leading_zeros();
                let bit = level * d as u32 + (d as u32 - 1 - m as u32);
                jump = Some(jump.map_or(bit, |b| b.max(bit)));
            }
        }
        match jump {
            None => {
                pos.copy_from_slice(&cand);
                return true;
            }
            Some(bit) => {
                key = ((key >> bit) + 1) << bit;
            }
        }
    }
    false
}

/// Iterator over every cell of `shape` in the order of `method`.
#[derive(Clone, Debug)]
pub struct Positions {
    method: VectorizationMethod,
    shape: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Positions {
    pub fn new(method: VectorizationMethod, shape: &[usize]) -> Self {
        Self {
            method,
            shape: shape.to_vec(),
            next: first_position(method, shape),
        }
    }
}

impl Iterator for Positions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        self.next = next_position(self.method, &cur, &self.shape)
            .expect("iterator stays in bounds");
        Some(cur)
    }
}

/// Every position of `shape` in visiting order.
pub fn full_order(method: VectorizationMethod, shape: &[usize]) -> Vec<Vec<usize>> {
    Positions::new(method, shape).collect()
}

/// Flat offsets into the core (in its own layout) in vectorization order.
pub fn gather_offsets(spec: &VectorizationSpec, core_shape: &[usize]) -> Result<Vec<usize>> {
    if spec.storage_order.len() != core_shape.len() {
        return Err(Error::InvalidPermutation(spec.storage_order.as_slice().to_vec()));
    }
    let stored_shape = spec.storage_order.apply(core_shape);
    let core_strides = strides(core_shape);
    let stride_by_axis: Vec<usize> = spec
        .storage_order
        .as_slice()
        .iter()
        .map(|&m| core_strides[m])
        .collect();
    let n: usize = core_shape.iter().product();
    let mut out = Vec::with_capacity(n);
    if spec.method == VectorizationMethod::Lexicographic {
        let mut pos = vec![0usize; stored_shape.len()];
        for _ in 0..n {
            out.push(pos.iter().zip(&stride_by_axis).map(|(&p, &s)| p * s).sum());
            next_lexicographic(&mut pos, &stored_shape);
        }
    } else {
        for pos in Positions::new(spec.method, &stored_shape) {
            out.push(pos.iter().zip(&stride_by_axis).map(|(&p, &s)| p * s).sum());
        }
    }
    Ok(out)
}
