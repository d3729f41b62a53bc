//! Real statevectors over `2^n` computational basis states.

use std::fmt::Write as _;

use crate::error::{invalid, FemError, Result};
use crate::sparse::{dot, norm};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 24;

/// Normalized real amplitudes. FEM vectors of length `N` occupy the first `N`
/// indices (the active block); the padding up to `2^n` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<f64>,
    active: usize,
}

/// Qubits needed to index `len` amplitudes.
pub fn qubits_for(len: usize) -> usize {
    len.max(1).next_power_of_two().trailing_zeros() as usize
}

impl Statevector {
    /// Normalizes `v` and zero-pads it to the next power of two.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(invalid("empty vector"));
        }
        let s = norm(v);
        if !(s > 0.0) || !s.is_finite() {
            return Err(FemError::ZeroNorm(format!("cannot normalize vector with norm {s}")));
        }
        let n_qubits = qubits_for(v.len());
        if n_qubits > MAX_QUBITS {
            return Err(invalid(format!("{n_qubits} qubits exceed the simulation cap of {MAX_QUBITS}")));
        }
        let mut amplitudes = vec![0.0; 1 << n_qubits];
        for (a, x) in amplitudes.iter_mut().zip(v) {
            *a = x / s;
        }
        Ok(Self { n_qubits, amplitudes, active: v.len() })
    }

    /// Wraps amplitudes that are already normalized (to `1e-10`).
    pub fn from_amplitudes(amplitudes: Vec<f64>, active: usize) -> Result<Self> {
        if !amplitudes.len().is_power_of_two() {
            return Err(invalid(format!("length {} is not a power of two", amplitudes.len())));
        }
        if active == 0 || active > amplitudes.len() || amplitudes[active..].iter().any(|a| *a != 0.0) {
            return Err(invalid("padding amplitudes must be zero"));
        }
        let s = norm(&amplitudes);
        if (s - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("amplitudes have norm {s}, expected 1")));
        }
        Ok(Self { n_qubits: qubits_for(amplitudes.len()), amplitudes, active })
    }

    /// Computational basis state `|index>` on `n_qubits` qubits.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(invalid(format!("index {index} outside {dim}-dimensional register")));
        }
        let mut amplitudes = vec![0.0; dim];
        amplitudes[index] = 1.0;
        Ok(Self { n_qubits, amplitudes, active: dim })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Length of the unpadded block.
    pub fn active(&self) -> usize {
        self.active
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn active_amplitudes(&self) -> &[f64] {
        &self.amplitudes[..self.active]
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(invalid(format!("dimension mismatch: {} vs {}", self.dim(), other.dim())));
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(dot(&self.amplitudes, &other.amplitudes))
    }

    /// `|| |self> - |other> ||_2`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
    }

    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.powi(2))
    }

    /// `index,amplitude` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,amplitude\n");
        for (i, a) in self.amplitudes.iter().enumerate() {
            let _ = writeln!(s, "{i},{a:.17e}");
        }
        s
    }
}
