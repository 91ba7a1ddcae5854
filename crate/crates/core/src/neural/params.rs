use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::scalar::Scalar;

use super::{DenseMatrix, Mlp2, MLP_TENSOR_NAMES};

/// Anything built from named dense tensors.
pub trait Parameterized<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, &DenseMatrix<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut DenseMatrix<T>));
}

impl<T: Scalar> Parameterized<T> for Mlp2<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &DenseMatrix<T>)) {
        for (name, t) in MLP_TENSOR_NAMES.iter().zip(self.tensors()) {
            f(name, t);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut DenseMatrix<T>)) {
        for (name, t) in MLP_TENSOR_NAMES.iter().zip(self.tensors_mut()) {
            f(name, t);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Names, shapes and flat offsets of every tensor, in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
}

impl ParamLayout {
    pub fn of<T: Scalar, P: Parameterized<T> + ?Sized>(p: &P) -> Self {
        let mut entries = Vec::new();
        let mut offset = 0;
        p.visit(&mut |name, t| {
            entries.push(ParamEntry {
                name: name.to_string(),
                rows: t.rows(),
                cols: t.cols(),
                offset,
            });
            offset += t.data().len();
        });
        Self { entries }
    }

    pub fn total(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len())
    }

    /// Entry holding flat index `idx`.
    pub fn locate(&self, idx: usize) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| idx >= e.offset && idx < e.offset + e.len())
    }
}

pub fn flatten<T: Scalar, P: Parameterized<T> + ?Sized>(p: &P) -> Vec<T> {
    let mut out = Vec::new();
    p.visit(&mut |_, t| out.extend_from_slice(t.data()));
    out
}

/// Overwrites every tensor of `p` from `flat`, which must match its layout exactly.
pub fn unflatten<T: Scalar, P: Parameterized<T> + ?Sized>(p: &mut P, flat: &[T]) -> Result<()> {
    let mut pos = 0;
    let mut short = false;
    p.visit_mut(&mut |_, t| {
        let n = t.data().len();
        if pos + n <= flat.len() {
            t.data_mut().copy_from_slice(&flat[pos..pos + n]);
        } else {
            short = true;
        }
        pos += n;
    });
    if short || pos != flat.len() {
        return param_err(format!("parameter vector has {} values, model needs {pos}", flat.len()));
    }
    Ok(())
}

pub fn zero_params<T: Scalar, P: Parameterized<T> + ?Sized>(p: &mut P) {
    p.visit_mut(&mut |_, t| t.data_mut().iter_mut().for_each(|v| *v = T::zero()));
}

/// First non-finite entry, reported by tensor path.
pub fn check_finite<T: Scalar>(layout: &ParamLayout, flat: &[T], what: &str) -> Result<()> {
    match flat.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => {
            let path = layout.locate(i).map_or("<unknown>", |e| e.name.as_str());
            Err(Error::Numerical(format!("non-finite {what} in {path}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_round_trip() {
        let mut m = Mlp2::<f64>::zeros(3, 4, 2);
        let layout = ParamLayout::of(&m);
        assert_eq!(layout.total(), 12 + 4 + 8 + 2);
        assert_eq!(layout.locate(13).unwrap().name, "b1");
        let flat: Vec<f64> = (0..layout.total()).map(|i| i as f64).collect();
        unflatten(&mut m, &flat).unwrap();
        assert_eq!(flatten(&m), flat);
        assert!(unflatten(&mut m, &flat[1..]).is_err());
        let mut bad = flat.clone();
        bad[20] = f64::NAN;
        let err = check_finite(&layout, &bad, "gradient").unwrap_err().to_string();
        assert!(err.contains("w2"), "{err}");
    }
}
