//! Maps trainable angles to and from the qubit x depth-slot grid, and
//! normalizes angles into the diffusion domain.
//!
//! The grid packs each qubit's parameterized gates into consecutive columns
//! (compact packing: slot j of row q is the j-th parameterized gate acting
//! on qubit q, in circuit order). Unparameterized gates occupy no slots.

use crate::error::{Error, Result};
use crate::sim::CircuitLayout;
use std::f64::consts::PI;

/// Raw rotation angles on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major cell values; unoccupied cells are exactly 0.
    pub values: Vec<f64>,
    /// Row-major occupancy mask.
    pub mask: Vec<bool>,
}

/// Grid in the diffusion domain. Encoded clean data lies in [-1, 1) on
/// occupied cells; noisy intermediates reuse the same container.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl NormalizedGrid {
    /// Zero grid with the mask of `layout`'s encoding.
    pub fn zeros_like_layout(layout: &CircuitLayout) -> Self {
        let g = encode_grid(layout, &vec![0.0; layout.n_params]).expect("arity matches");
        NormalizedGrid {
            rows: g.rows,
            cols: g.cols,
            values: vec![0.0; g.values.len()],
            mask: g.mask,
        }
    }

    pub fn same_shape(&self, other: &NormalizedGrid) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.mask == other.mask
    }

    pub fn occupied_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Occupied cell values in row-major order.
    pub fn occupied_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .collect()
    }

    /// Rebuilds a grid from occupied values (row-major order).
    pub fn from_occupied(template: &NormalizedGrid, occupied: &[f64]) -> Result<Self> {
        if occupied.len() != template.occupied_count() {
            return Err(Error::GridShapeMismatch(format!(
                "expected {} occupied values, got {}",
                template.occupied_count(),
                occupied.len()
            )));
        }
        let mut values = vec![0.0; template.values.len()];
        let mut it = occupied.iter();
        for (v, m) in values.iter_mut().zip(&template.mask) {
            if *m {
                *v = *it.next().unwrap();
            }
        }
        Ok(NormalizedGrid {
            rows: template.rows,
            cols: template.cols,
            values,
            mask: template.mask.clone(),
        })
    }
}

/// Per-qubit slot assignment of parameter indices, in circuit order.
fn slot_map(layout: &CircuitLayout) -> (usize, Vec<Vec<usize>>) {
    let mut per_qubit: Vec<Vec<usize>> = vec![Vec::new(); layout.n_qubits];
    for gate in &layout.gates {
        if let Some(k) = gate.param_index() {
            per_qubit[gate.target].push(k);
        }
    }
    let cols = per_qubit.iter().map(Vec::len).max().unwrap_or(0);
    (cols, per_qubit)
}

/// theta -> grid: the j-th parameterized gate on qubit q lands at (q, j).
pub fn encode_grid(layout: &CircuitLayout, theta: &[f64]) -> Result<ParamGrid> {
    if theta.len() != layout.n_params {
        return Err(Error::ParamCountMismatch {
            expected: layout.n_params,
            got: theta.len(),
        });
    }
    let (cols, per_qubit) = slot_map(layout);
    let rows = layout.n_qubits;
    let mut values = vec![0.0; rows * cols];
    let mut mask = vec![false; rows * cols];
    for (q, slots) in per_qubit.iter().enumerate() {
        for (j, &k) in slots.iter().enumerate() {
            values[q * cols + j] = theta[k];
            mask[q * cols + j] = true;
        }
    }
    Ok(ParamGrid { rows, cols, values, mask })
}

/// grid -> theta: exact inverse of `encode_grid` on occupied cells;
/// unoccupied values are ignored.
pub fn decode_grid(layout: &CircuitLayout, grid: &ParamGrid) -> Result<Vec<f64>> {
    let (cols, per_qubit) = slot_map(layout);
    if grid.rows != layout.n_qubits || grid.cols != cols {
        return Err(Error::GridShapeMismatch(format!(
            "layout encodes to {}x{}, grid is {}x{}",
            layout.n_qubits, cols, grid.rows, grid.cols
        )));
    }
    let mut theta = vec![0.0; layout.n_params];
    for (q, slots) in per_qubit.iter().enumerate() {
        for (j, &k) in slots.iter().enumerate() {
            theta[k] = grid.values[q * cols + j];
        }
    }
    Ok(theta)
}

/// Wraps an angle into [-pi, pi); the boundary maps to -pi.
pub fn wrap_angle(x: f64) -> f64 {
    let w = x - (2.0 * PI) * ((x + PI) / (2.0 * PI)).floor();
    // guard against w == pi from rounding at the seam
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Wrap occupied angles into [-pi, pi), then scale by 1/pi into [-1, 1).
pub fn normalize_grid(grid: &ParamGrid) -> Result<NormalizedGrid> {
    let mut values = vec![0.0; grid.values.len()];
    for i in 0..grid.values.len() {
        if grid.mask[i] {
            let v = grid.values[i];
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(format!("grid cell {i} = {v}")));
            }
            values[i] = wrap_angle(v) / PI;
        }
    }
    Ok(NormalizedGrid {
        rows: grid.rows,
        cols: grid.cols,
        values,
        mask: grid.mask.clone(),
    })
}

/// Scale occupied cells by pi (no unwrap).
pub fn denormalize_grid(grid: &NormalizedGrid) -> Result<ParamGrid> {
    let mut values = vec![0.0; grid.values.len()];
    for i in 0..grid.values.len() {
        if grid.mask[i] {
            let v = grid.values[i];
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(format!("grid cell {i} = {v}")));
            }
            values[i] = v * PI;
        }
    }
    Ok(ParamGrid {
        rows: grid.rows,
        cols: grid.cols,
        values,
        mask: grid.mask.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, uniform_angle};
    use crate::tasks::{build_task, task_loss, TaskFamily};

    #[test]
    fn xyz_layout_encodes_to_4x2_full_mask() {
        let task = build_task(TaskFamily::Xyz1d, &[1.0, 1.0, 1.0], 0).unwrap();
        let theta: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let g = encode_grid(&task.layout, &theta).unwrap();
        assert_eq!((g.rows, g.cols), (4, 2));
        assert!(g.mask.iter().all(|&m| m));
        // row q holds the two RY angles of qubit q (layers 0 and 1)
        for q in 0..4 {
            assert_eq!(g.values[q * 2], q as f64);
            assert_eq!(g.values[q * 2 + 1], (4 + q) as f64);
        }
    }

    #[test]
    fn random_vqe_layout_encodes_to_4x12() {
        let task = build_task(TaskFamily::RandomVqe, &[], 3).unwrap();
        let g = encode_grid(&task.layout, &vec![0.0; 48]).unwrap();
        assert_eq!((g.rows, g.cols), (4, 12));
        assert!(g.mask.iter().all(|&m| m));
    }

    #[test]
    fn q_pulse_drift_gates_take_no_slots() {
        let task = build_task(TaskFamily::QPulse, &[0.3, 0.2, 0.4, 1.0], 0).unwrap();
        let g = encode_grid(&task.layout, &vec![0.0; 24]).unwrap();
        assert_eq!((g.rows, g.cols), (2, 12));
        assert!(g.mask.iter().all(|&m| m));
    }

    #[test]
    fn zero_parameter_layout_gives_empty_mask() {
        use crate::sim::{CircuitLayout, GateOp};
        let layout = CircuitLayout::new(2, vec![GateOp::cnot(0, 1)], 1).unwrap();
        let g = encode_grid(&layout, &[]).unwrap();
        assert_eq!(g.cols, 0);
        assert!(g.mask.is_empty());
    }

    #[test]
    fn round_trip_all_families_bit_exact() {
        let mut rng = rng_from_seed(11);
        for family in TaskFamily::ALL {
            let params = crate::tasks::sample_task_params(family, &mut rng);
            let task = build_task(family, &params, 17).unwrap();
            for _ in 0..200 {
                let theta: Vec<f64> =
                    (0..task.layout.n_params).map(|_| uniform_angle(&mut rng)).collect();
                let g = encode_grid(&task.layout, &theta).unwrap();
                let back = decode_grid(&task.layout, &g).unwrap();
                assert_eq!(back, theta, "{family}");
            }
        }
    }

    #[test]
    fn garbage_in_masked_cells_is_ignored() {
        use crate::sim::{CircuitLayout, GateOp};
        // qubit 0 has 2 params, qubit 1 has 1: grid is 2x2 with one hole
        let layout = CircuitLayout::new(
            2,
            vec![GateOp::ry(0, 0), GateOp::ry(1, 1), GateOp::ry(0, 2)],
            1,
        )
        .unwrap();
        let theta = vec![0.1, 0.2, 0.3];
        let mut g = encode_grid(&layout, &theta).unwrap();
        assert!(!g.mask[3], "cell (1,1) is unoccupied");
        g.values[3] = 999.0;
        assert_eq!(decode_grid(&layout, &g).unwrap(), theta);
    }

    #[test]
    fn wrap_convention_at_boundaries() {
        assert_eq!(wrap_angle(3.0 * PI), -PI);
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(PI / 2.0) - PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn normalize_examples() {
        let task = build_task(TaskFamily::Xyz1d, &[1.0, 1.0, 1.0], 0).unwrap();
        let mut theta = vec![0.0; 8];
        theta[0] = 3.0 * PI;
        theta[1] = PI / 2.0;
        let g = encode_grid(&task.layout, &theta).unwrap();
        let ng = normalize_grid(&g).unwrap();
        let idx0 = 0; // qubit 0, slot 0 holds theta[0]
        assert_eq!(ng.values[idx0], -1.0);
        // theta[1] sits at qubit 1, slot 0 = cell (1, 0)
        assert!((ng.values[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wrap_is_idempotent_on_wrapped_values() {
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            let x = 20.0 * (crate::rng::standard_normal(&mut rng));
            let w = wrap_angle(x);
            assert!((-PI..PI).contains(&w), "{x} -> {w}");
            assert_eq!(wrap_angle(w), w);
        }
    }

    #[test]
    fn normalize_then_denormalize_round_trips_within_1e12() {
        let task = build_task(TaskFamily::Fh1d, &[0.5, 1.0], 0).unwrap();
        let mut rng = rng_from_seed(8);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..8).map(|_| uniform_angle(&mut rng)).collect();
            let g = encode_grid(&task.layout, &theta).unwrap();
            let ng = normalize_grid(&g).unwrap();
            for v in ng.occupied_values() {
                assert!((-1.0..1.0).contains(&v));
            }
            let back = denormalize_grid(&ng).unwrap();
            for (a, b) in back.values.iter().zip(&g.values) {
                assert!((a - b).abs() < 1e-12);
            }
            // forward-after-inverse is the identity on [-1, 1)
            let ng2 = normalize_grid(&back).unwrap();
            for (a, b) in ng2.values.iter().zip(&ng.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_invariant_under_angle_wrapping() {
        let mut rng = rng_from_seed(21);
        for family in [
            TaskFamily::Xyz1d,
            TaskFamily::Fh1d,
            TaskFamily::Tfi2d,
            TaskFamily::RandomVqe,
        ] {
            let params = crate::tasks::sample_task_params(family, &mut rng);
            let task = build_task(family, &params, 5).unwrap();
            for _ in 0..5 {
                let theta: Vec<f64> = (0..task.layout.n_params)
                    .map(|_| 6.0 * crate::rng::standard_normal(&mut rng))
                    .collect();
                let wrapped: Vec<f64> = theta.iter().map(|&x| wrap_angle(x)).collect();
                let a = task_loss(&task, &theta).unwrap();
                let b = task_loss(&task, &wrapped).unwrap();
                assert!((a - b).abs() < 1e-9, "{family}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn non_finite_values_rejected() {
        let task = build_task(TaskFamily::Xyz1d, &[1.0, 1.0, 1.0], 0).unwrap();
        let mut theta = vec![0.0; 8];
        theta[3] = f64::NAN;
        let g = encode_grid(&task.layout, &theta).unwrap();
        assert!(normalize_grid(&g).is_err());
    }
}
