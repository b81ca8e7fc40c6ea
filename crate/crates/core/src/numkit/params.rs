use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{shape_err, Result};

/// One named block inside a flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.size()
    }
}

/// Ordered, contiguous segment descriptors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a segment directly after the previous one.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) {
        let seg = Segment {
            name: name.into(),
            shape,
            offset: self.len,
        };
        self.len += seg.size();
        self.segments.push(seg);
    }

    /// Rebuilds a layout from explicit descriptors, checking contiguity.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let mut len = 0;
        for s in &segments {
            if s.offset != len {
                return Err(shape_err(format!(
                    "segment `{}` starts at {} but previous segments end at {}",
                    s.name, s.offset, len
                )));
            }
            len += s.size();
        }
        Ok(Self { segments, len })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Flat parameter storage with a named layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(layout: ParamLayout, data: Vec<f64>) -> Result<Self> {
        if layout.len() != data.len() {
            return Err(shape_err(format!(
                "layout needs {} values, got {}",
                layout.len(),
                data.len()
            )));
        }
        Ok(Self { data, layout })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            data: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    /// Same layout, different values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.layout.clone(), data)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
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

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|s| &self.data[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.layout.find(name)?.range();
        Some(&mut self.data[r])
    }

    /// Splits into one tensor per segment.
    pub fn unpack(&self) -> Vec<(String, Tensor)> {
        self.layout
            .segments()
            .iter()
            .map(|s| {
                let t = Tensor::new(s.shape.clone(), self.data[s.range()].to_vec())
                    .unwrap_or_else(|_| Tensor::zeros(s.shape.clone()));
                (s.name.clone(), t)
            })
            .collect()
    }

    /// Inverse of [`ParamVector::unpack`].
    pub fn pack(layout: &ParamLayout, parts: &[(String, Tensor)]) -> Result<Self> {
        if parts.len() != layout.segments().len() {
            return Err(shape_err("segment count mismatch"));
        }
        let mut data = Vec::with_capacity(layout.len());
        for (seg, (name, t)) in layout.segments().iter().zip(parts) {
            if &seg.name != name || seg.shape.as_slice() != t.shape() {
                return Err(shape_err(format!("segment `{}` does not match", seg.name)));
            }
            data.extend_from_slice(t.data());
        }
        Self::new(layout.clone(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ParamLayout {
        let mut l = ParamLayout::new();
        l.push("w", vec![2, 3]);
        l.push("b", vec![2]);
        l
    }

    #[test]
    fn contiguous_offsets() {
        let l = layout();
        assert_eq!(l.len(), 8);
        assert_eq!(l.find("b").unwrap().offset, 6);
        let mut bad = l.segments().to_vec();
        bad[1].offset = 7;
        assert!(ParamLayout::from_segments(bad).is_err());
    }

    #[test]
    fn pack_unpack_exact() {
        let data: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let v = ParamVector::new(layout(), data).unwrap();
        let parts = v.unpack();
        assert_eq!(parts[1].1.data(), &v.data()[6..]);
        assert_eq!(ParamVector::pack(v.layout(), &parts).unwrap(), v);
    }
}
