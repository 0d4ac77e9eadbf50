use crate::error::{Error, Result};

/// Named slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flattened model parameters together with the layout that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<Segment>,
}

impl ParamVector {
    /// Builds a layout from `(name, shape)` pairs laid out back to back.
    pub fn layout_of(segments: &[(&str, &[usize])]) -> Vec<Segment> {
        let mut offset = 0;
        segments
            .iter()
            .map(|(name, shape)| {
                let seg = Segment {
                    name: (*name).to_owned(),
                    offset,
                    shape: shape.to_vec(),
                };
                offset += seg.size();
                seg
            })
            .collect()
    }

    pub fn new(values: Vec<f64>, layout: Vec<Segment>) -> Result<Self> {
        let total: usize = layout.iter().map(Segment::size).sum();
        if total != values.len() {
            return Err(Error::LayoutMismatch(format!(
                "layout covers {total} values, vector has {}",
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.offset..s.offset + s.size()])
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch("parameter vectors have different layouts".into()));
        }
        Ok(())
    }

    /// Squared Euclidean distance; equals the sum of per-segment squared differences.
    pub fn squared_distance(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> ParamVector {
        ParamVector {
            values: self.values.iter().map(|v| v * c).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Little-endian f64 bytes in layout order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let layout = ParamVector::layout_of(&[("w", &[2, 3]), ("b", &[2])]);
        assert_eq!(layout[1].offset, 6);
        assert!(ParamVector::new(vec![0.0; 7], layout.clone()).is_err());
        let pv = ParamVector::new((0..8).map(f64::from).collect(), layout).unwrap();
        assert_eq!(pv.segment("b").unwrap(), &[6.0, 7.0]);
    }

    #[test]
    fn distance_requires_same_layout() {
        let a = ParamVector::new(vec![0.0; 2], ParamVector::layout_of(&[("w", &[2])])).unwrap();
        let b = ParamVector::new(vec![0.0; 2], ParamVector::layout_of(&[("v", &[2])])).unwrap();
        assert!(matches!(a.squared_distance(&b), Err(Error::LayoutMismatch(_))));
        assert_eq!(a.squared_distance(&a).unwrap(), 0.0);
    }
}
