use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{config, Error, Result};
use crate::geometry::{AngleSet, Geometry};

/// Partial or full set of projection rows keyed by angle index.
///
/// The set of present indices is the selection of views that has been
/// acquired; with all `num_angles` rows present it is the full sinogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: Geometry,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl Sinogram {
    pub fn empty(geometry: Geometry) -> Self {
        Self {
            geometry,
            rows: BTreeMap::new(),
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Inserts (or replaces) the row at `angle`.
    pub fn insert_row(&mut self, angle: usize, row: Vec<f64>) -> Result<()> {
        self.geometry.check_angle(angle)?;
        if row.len() != self.geometry.num_detectors {
            return Err(Error::Shape {
                expected: (1, self.geometry.num_detectors),
                actual: (1, row.len()),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(config("sinogram row contains non-finite values"));
        }
        self.rows.insert(angle, row);
        Ok(())
    }

    pub fn row(&self, angle: usize) -> Option<&[f64]> {
        self.rows.get(&angle).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&a, r)| (a, r.as_slice()))
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = (usize, &mut Vec<f64>)> {
        self.rows.iter_mut().map(|(&a, r)| (a, r))
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.geometry.num_angles
    }

    pub fn angles(&self) -> AngleSet {
        let mut s = AngleSet::empty();
        for &a in self.rows.keys() {
            s.insert(a);
        }
        s
    }

    /// Rows restricted to `angles`; every requested angle must be present.
    pub fn subset(&self, angles: &AngleSet) -> Result<Sinogram> {
        let mut out = Sinogram::empty(self.geometry);
        for a in angles.iter() {
            let row = self.rows.get(&a).ok_or(Error::Bounds {
                index: a,
                limit: self.geometry.num_angles,
            })?;
            out.rows.insert(a, row.clone());
        }
        Ok(out)
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        self.rows
            .iter()
            .filter_map(|(a, r)| other.rows.get(a).map(|o| (r, o)))
            .map(|(r, o)| r.iter().zip(o).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn check_geometry(&self, geom: &Geometry) -> Result<()> {
        if self.geometry != *geom {
            return Err(config("sinogram geometry does not match"));
        }
        Ok(())
    }
}
