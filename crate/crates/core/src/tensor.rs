//! Dense row-major real tensor with one designated coding axis.
//!
//! The coding axis is the axis the encoder splits into groups of `K` slices.
//! Everything here is plain `f64` storage plus the index arithmetic needed to
//! pull slices along that axis in and out.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    coding_axis: usize,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::with_axis(shape, data, 0)
    }

    pub fn with_axis(shape: Vec<usize>, data: Vec<f64>, coding_axis: usize) -> Result<Self> {
        if shape.is_empty() {
            return invalid("tensor rank must be at least 1");
        }
        if shape.contains(&0) {
            return invalid(format!("tensor extents must be positive, got {shape:?}"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return invalid(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                len
            ));
        }
        if coding_axis >= shape.len() {
            return invalid(format!(
                "coding axis {coding_axis} out of range for rank {}",
                shape.len()
            ));
        }
        Ok(Self {
            shape,
            data,
            coding_axis,
        })
    }

    /// Rank-1 tensor.
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data,
            coding_axis: 0,
        }
    }

    /// Rank-2 tensor from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len]).expect("zeros: invalid shape")
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![value; len]).expect("filled: invalid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn coding_axis(&self) -> usize {
        self.coding_axis
    }

    pub fn set_coding_axis(&mut self, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return invalid(format!(
                "coding axis {axis} out of range for rank {}",
                self.rank()
            ));
        }
        self.coding_axis = axis;
        Ok(())
    }

    /// Extent along the coding axis.
    pub fn extent(&self) -> usize {
        self.shape[self.coding_axis]
    }

    /// Shape with the coding axis replaced by `extent`.
    pub fn shape_with_extent(&self, extent: usize) -> Vec<usize> {
        let mut s = self.shape.clone();
        s[self.coding_axis] = extent;
        s
    }

    fn outer_inner(&self) -> (usize, usize) {
        let a = self.coding_axis;
        let outer = self.shape[..a].iter().product();
        let inner = self.shape[a + 1..].iter().product();
        (outer, inner)
    }

    /// Whether `other` has identical shape and coding axis.
    pub fn same_layout(&self, other: &Tensor) -> bool {
        self.shape == other.shape && self.coding_axis == other.coding_axis
    }

    /// Gathers the given coding-axis slices, in order, into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return invalid("select: empty index list");
        }
        let extent = self.extent();
        if let Some(&bad) = indices.iter().find(|&&i| i >= extent) {
            return invalid(format!(
                "select: index {bad} out of range for extent {extent}"
            ));
        }
        let (outer, inner) = self.outer_inner();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            let base = o * extent * inner;
            for &i in indices {
                let start = base + i * inner;
                data.extend_from_slice(&self.data[start..start + inner]);
            }
        }
        Tensor::with_axis(
            self.shape_with_extent(indices.len()),
            data,
            self.coding_axis,
        )
    }

    /// One slice along the coding axis (extent 1).
    pub fn axis_slice(&self, index: usize) -> Result<Tensor> {
        self.select(&[index])
    }

    /// Concatenates tensors along their shared coding axis.
    pub fn concat(parts: &[Tensor]) -> Result<Tensor> {
        let first = match parts.first() {
            Some(p) => p,
            None => return invalid("concat: no parts"),
        };
        let axis = first.coding_axis;
        for p in parts {
            let mut a = p.shape.clone();
            let mut b = first.shape.clone();
            if p.coding_axis != axis || a.len() != b.len() {
                return invalid("concat: parts disagree on rank or coding axis");
            }
            a[axis] = 0;
            b[axis] = 0;
            if a != b {
                return invalid(format!(
                    "concat: incompatible shapes {:?} and {:?}",
                    p.shape, first.shape
                ));
            }
        }
        let (outer, inner) = first.outer_inner();
        let total: usize = parts.iter().map(|p| p.extent()).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let e = p.extent();
                let start = o * e * inner;
                data.extend_from_slice(&p.data[start..start + e * inner]);
            }
        }
        Tensor::with_axis(first.shape_with_extent(total), data, axis)
    }

    /// Zero-pads the coding axis up to `extent`.
    pub fn pad_to(&self, extent: usize) -> Result<Tensor> {
        let cur = self.extent();
        if extent < cur {
            return invalid(format!("pad_to: target {extent} smaller than extent {cur}"));
        }
        if extent == cur {
            return Ok(self.clone());
        }
        let zeros = Tensor::with_axis(
            self.shape_with_extent(extent - cur),
            vec![0.0; self.len() / cur * (extent - cur)],
            self.coding_axis,
        )?;
        Tensor::concat(&[self.clone(), zeros])
    }

    /// Keeps the first `extent` slices along the coding axis.
    pub fn truncate(&self, extent: usize) -> Result<Tensor> {
        if extent == 0 || extent > self.extent() {
            return invalid(format!(
                "truncate: bad extent {extent} (have {})",
                self.extent()
            ));
        }
        if extent == self.extent() {
            return Ok(self.clone());
        }
        let idx: Vec<usize> = (0..extent).collect();
        self.select(&idx)
    }

    /// Splits the coding axis into `k` strided parts: part `j` holds slices
    /// `j, j + k, j + 2k, ...`. The extent must be a multiple of `k`.
    pub fn deinterleave(&self, k: usize) -> Result<Vec<Tensor>> {
        if k == 0 || !self.extent().is_multiple_of(k) {
            return invalid(format!(
                "deinterleave: extent {} not a multiple of {k}",
                self.extent()
            ));
        }
        let groups = self.extent() / k;
        (0..k)
            .map(|j| {
                let idx: Vec<usize> = (0..groups).map(|g| g * k + j).collect();
                self.select(&idx)
            })
            .collect()
    }

    /// Inverse of [`Tensor::deinterleave`].
    pub fn interleave(parts: &[Tensor]) -> Result<Tensor> {
        let k = parts.len();
        let first = match parts.first() {
            Some(p) => p,
            None => return invalid("interleave: no parts"),
        };
        if parts.iter().any(|p| !p.same_layout(first)) {
            return invalid("interleave: parts must share one layout");
        }
        let groups = first.extent();
        let (outer, inner) = first.outer_inner();
        let mut data = Vec::with_capacity(first.len() * k);
        for o in 0..outer {
            for g in 0..groups {
                for p in parts {
                    let start = (o * groups + g) * inner;
                    data.extend_from_slice(&p.data[start..start + inner]);
                }
            }
        }
        Tensor::with_axis(first.shape_with_extent(groups * k), data, first.coding_axis)
    }

    /// Reinterprets the data with a new shape (coding axis reset to 0).
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            coding_axis: self.coding_axis,
        }
    }

    pub fn scale(&self, a: f64) -> Tensor {
        self.map(|v| a * v)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return invalid(format!("axpy: shape {:?} vs {:?}", self.shape, other.shape));
        }
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return invalid(format!("shape {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Serializes as `rank: u64`, `rank` extents as `u64`, then the data as
    /// `f64`, all little-endian. The coding axis is not stored.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (1 + self.rank() + self.len()));
        out.extend_from_slice(&(self.rank() as u64).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Tensor> {
        let mut cursor = bytes;
        let t = Tensor::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return invalid(format!("{} trailing bytes after tensor", cursor.len()));
        }
        Ok(t)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Tensor> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let rank = u64::from_le_bytes(next(r)?) as usize;
        if rank == 0 || rank > 64 {
            return Err(Error::InvalidArgument(format!(
                "implausible tensor rank {rank}"
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(next(r)?) as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidArgument("tensor size overflows".into()))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(next(r)?));
        }
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Tensor {
        // 3 x 4, values encode (row, col)
        let data = (0..12).map(|i| ((i / 4) * 10 + i % 4) as f64).collect();
        Tensor::matrix(3, 4, data).unwrap()
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::with_axis(vec![2], vec![1.0; 2], 1).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn select_along_second_axis() {
        let mut t = grid();
        t.set_coding_axis(1).unwrap();
        let s = t.select(&[3, 1]).unwrap();
        assert_eq!(s.shape(), &[3, 2]);
        assert_eq!(s.data(), &[3.0, 1.0, 13.0, 11.0, 23.0, 21.0]);
    }

    #[test]
    fn interleave_inverts_deinterleave() {
        let t = Tensor::new(vec![6, 2], (0..12).map(f64::from).collect()).unwrap();
        let parts = t.deinterleave(3).unwrap();
        assert_eq!(parts[1].data(), &[2.0, 3.0, 8.0, 9.0]);
        assert_eq!(Tensor::interleave(&parts).unwrap(), t);

        let mut u = grid();
        u.set_coding_axis(1).unwrap();
        let parts = u.deinterleave(2).unwrap();
        assert_eq!(Tensor::interleave(&parts).unwrap(), u);
    }

    #[test]
    fn pad_and_truncate() {
        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let p = t.pad_to(5).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(p.truncate(3).unwrap(), t);
        assert!(t.pad_to(2).is_err());
    }

    #[test]
    fn bytes_layout_is_little_endian_header_then_data() {
        let t = Tensor::matrix(1, 2, vec![1.5, -2.0]).unwrap();
        let b = t.to_bytes();
        assert_eq!(b.len(), 8 * 5);
        assert_eq!(&b[..8], &2u64.to_le_bytes());
        assert_eq!(&b[8..16], &1u64.to_le_bytes());
        assert_eq!(&b[16..24], &2u64.to_le_bytes());
        assert_eq!(&b[24..32], &1.5f64.to_le_bytes());
        assert_eq!(Tensor::from_bytes(&b).unwrap(), t);
        assert!(Tensor::from_bytes(&b[..30]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn bytes_roundtrip(shape in proptest::collection::vec(1usize..4, 1..4), seed in 0u64..1000) {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = (0..len).map(|i| (i as f64 + seed as f64).sin() * 1e3).collect();
            let t = Tensor::new(shape, data).unwrap();
            proptest::prop_assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
