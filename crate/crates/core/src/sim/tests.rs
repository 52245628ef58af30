use super::*;
use crate::rng::{rng_from_seed, standard_normal, uniform_angle, SeededRng};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_state(n_qubits: usize, rng: &mut SeededRng) -> StateVector {
    let dim = 1 << n_qubits;
    let mut amps: Vec<Complex64> = (0..dim)
        .map(|_| c(standard_normal(rng), standard_normal(rng)))
        .collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    StateVector::from_amplitudes(amps).unwrap()
}

fn random_observable(n_qubits: usize, rng: &mut SeededRng) -> Observable {
    use rand::Rng;
    let n_terms = rng.random_range(1..=4);
    let terms = (0..n_terms)
        .map(|_| {
            let coeff = crate::rng::uniform_in(rng, -2.0, 2.0);
            let ops = (0..n_qubits)
                .map(|_| Pauli::from_code(rng.random_range(0..4u8)).unwrap())
                .collect();
            (coeff, PauliString(ops))
        })
        .collect();
    Observable::new(n_qubits, terms).unwrap()
}

fn xyz_observable(j1: f64, j2: f64, j3: f64) -> Observable {
    let n = 4;
    let mut terms = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        terms.push((j1, PauliString::pair(n, i, j, Pauli::X)));
        terms.push((j2, PauliString::pair(n, i, j, Pauli::Y)));
        terms.push((j3, PauliString::pair(n, i, j, Pauli::Z)));
    }
    Observable::new(n, terms).unwrap()
}

/// Test oracle: eigen-decomposition of a Hermitian matrix by cyclic complex
/// Jacobi rotations. Returns (eigenvalues, eigenvector matrix V with
/// eigenvectors in columns).
fn jacobi_hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.dim;
    let mut a = h.clone();
    let mut v = CMatrix::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a.get(p, q).norm_sqr();
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.norm() < 1e-300 {
                    continue;
                }
                let phi = apq.arg();
                let r = apq.norm();
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let theta = 0.5 * (2.0 * r).atan2(app - aqq);
                let (s, cth) = theta.sin_cos();
                // U[p][p]=c, U[p][q]=-s e^{i phi}, U[q][p]=s e^{-i phi}, U[q][q]=c
                let upq = -s * Complex64::from_polar(1.0, phi);
                let uqp = s * Complex64::from_polar(1.0, -phi);
                // A <- U^dag A U ; update columns then rows
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * cth + akq * uqp);
                    a.set(k, q, akp * upq + akq * cth);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, apk * cth + aqk * uqp.conj());
                    a.set(q, k, apk * upq.conj() + aqk * cth);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * cth + vkq * uqp);
                    v.set(k, q, vkp * upq + vkq * cth);
                }
            }
        }
    }
    let eigs: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    (eigs, v)
}

fn random_hermitian(dim: usize, rng: &mut SeededRng) -> CMatrix {
    let mut m = CMatrix::zeros(dim);
    for i in 0..dim {
        m.set(i, i, c(standard_normal(rng), 0.0));
        for j in i + 1..dim {
            let z = c(standard_normal(rng), standard_normal(rng));
            m.set(i, j, z);
            m.set(j, i, z.conj());
        }
    }
    m
}

// --- apply_gate -----------------------------------------------------------

#[test]
fn ry_zero_is_identity() {
    let state = StateVector::zero_state(1);
    let out = apply_gate(&state, &GateOp::ry(0, 0), &[0.0]).unwrap();
    assert_eq!(out.amplitudes()[0], c(1.0, 0.0));
    assert_eq!(out.amplitudes()[1], c(0.0, 0.0));
}

#[test]
fn cnot_truth_table() {
    // |10> (control q0 = 1, target q1 = 0) -> |11>
    let mut amps = vec![c(0.0, 0.0); 4];
    amps[0b10] = c(1.0, 0.0);
    let state = StateVector::from_amplitudes(amps).unwrap();
    let out = apply_gate(&state, &GateOp::cnot(0, 1), &[]).unwrap();
    assert_eq!(out.amplitudes()[0b11], c(1.0, 0.0));
    assert_eq!(out.amplitudes()[0b10], c(0.0, 0.0));
}

#[test]
fn rx_on_random_state_matches_dense_oracle() {
    // dense route: RX(angle) on qubit q equals exp(-i (angle/2) X_q)
    let mut rng = rng_from_seed(42);
    for q in 0..3 {
        let state = random_state(3, &mut rng);
        let angle = 0.7;
        let fast = apply_gate(&state, &GateOp::rx(q, 0), &[angle]).unwrap();
        let x_q = Observable::new(3, vec![(1.0, PauliString::single(3, q, Pauli::X))]).unwrap();
        let dense = hermitian_exp(&pauli_matrix(&x_q).unwrap(), angle / 2.0).unwrap();
        let expected = dense.matvec(state.amplitudes());
        for (a, b) in fast.amplitudes().iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn gate_errors_name_gate_and_index() {
    let state = StateVector::zero_state(2);
    let err = apply_gate(&state, &GateOp::ry(5, 0), &[0.1]).unwrap_err();
    assert!(matches!(err, Error::QubitOutOfRange { qubit: 5, .. }));
    let err = apply_gate(&state, &GateOp::ry(0, 3), &[0.1]).unwrap_err();
    assert!(matches!(err, Error::ParamIndexOutOfRange { index: 3, .. }));
}

// --- run_circuit -----------------------------------------------------------

#[test]
fn empty_circuit_is_zero_state() {
    let layout = CircuitLayout::new(3, vec![], 0).unwrap();
    let state = run_circuit(&layout, &[]).unwrap();
    assert_eq!(state.amplitudes()[0], c(1.0, 0.0));
    assert!((state.norm_sq() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_angles_give_zero_state_up_to_rz_phase() {
    let layout = CircuitLayout::new(
        2,
        vec![GateOp::rx(0, 0), GateOp::ry(1, 1), GateOp::rz(0, 2)],
        1,
    )
    .unwrap();
    let state = run_circuit(&layout, &[0.0; 3]).unwrap();
    assert!((state.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
    for a in &state.amplitudes()[1..] {
        assert!(a.norm() < 1e-12);
    }
}

#[test]
fn run_circuit_matches_dense_matrix_product() {
    let mut rng = rng_from_seed(7);
    let layout = crate::tasks::build_task(crate::tasks::TaskFamily::Xyz1d, &[2.0, 1.0, 0.5], 0)
        .unwrap()
        .layout;
    let theta: Vec<f64> = (0..8).map(|_| uniform_angle(&mut rng)).collect();
    let fast = run_circuit(&layout, &theta).unwrap();
    let u = circuit_unitary(&layout, &theta).unwrap();
    let mut basis = vec![c(0.0, 0.0); 16];
    basis[0] = c(1.0, 0.0);
    let expected = u.matvec(&basis);
    for (a, b) in fast.amplitudes().iter().zip(&expected) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn run_circuit_rejects_wrong_arity() {
    let layout = CircuitLayout::new(1, vec![GateOp::ry(0, 0)], 1).unwrap();
    assert!(matches!(
        run_circuit(&layout, &[]).unwrap_err(),
        Error::ParamCountMismatch { expected: 1, got: 0 }
    ));
}

// --- expectation ------------------------------------------------------------

#[test]
fn expectation_z_on_zero_state() {
    let state = StateVector::zero_state(4);
    let obs = Observable::new(4, vec![(1.0, PauliString::single(4, 0, Pauli::Z))]).unwrap();
    assert_eq!(expectation(&state, &obs).unwrap(), 1.0);
}

#[test]
fn expectation_x_on_plus_state() {
    use std::f64::consts::FRAC_PI_2;
    let state = apply_gate(&StateVector::zero_state(1), &GateOp::ry(0, 0), &[FRAC_PI_2]).unwrap();
    let obs = Observable::new(1, vec![(1.0, PauliString::single(1, 0, Pauli::X))]).unwrap();
    assert!((expectation(&state, &obs).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn expectation_matches_dense_quadratic_form() {
    let mut rng = rng_from_seed(13);
    let obs = xyz_observable(2.0, 1.0, 0.5);
    let h = pauli_matrix(&obs).unwrap();
    for _ in 0..20 {
        let state = random_state(4, &mut rng);
        let hv = h.matvec(state.amplitudes());
        let dense: Complex64 = state
            .amplitudes()
            .iter()
            .zip(&hv)
            .map(|(a, b)| a.conj() * b)
            .sum();
        let fast = expectation(&state, &obs).unwrap();
        assert!((fast - dense.re).abs() < 1e-10);
        assert!(dense.im.abs() < 1e-10);
    }
}

#[test]
fn expectation_qubit_mismatch() {
    let state = StateVector::zero_state(2);
    let obs = Observable::new(3, vec![(1.0, PauliString::identity(3))]).unwrap();
    assert!(matches!(
        expectation(&state, &obs).unwrap_err(),
        Error::QubitCountMismatch { .. }
    ));
}

// --- pauli_matrix ------------------------------------------------------------

#[test]
fn pauli_matrix_z() {
    let obs = Observable::new(1, vec![(1.0, PauliString::single(1, 0, Pauli::Z))]).unwrap();
    let m = pauli_matrix(&obs).unwrap();
    assert_eq!(m.get(0, 0), c(1.0, 0.0));
    assert_eq!(m.get(1, 1), c(-1.0, 0.0));
    assert_eq!(m.get(0, 1), c(0.0, 0.0));
}

#[test]
fn pauli_matrix_half_iz_plus_half_zi() {
    let obs = Observable::new(
        2,
        vec![
            (0.5, PauliString::parse("IZ").unwrap()),
            (0.5, PauliString::parse("ZI").unwrap()),
        ],
    )
    .unwrap();
    let m = pauli_matrix(&obs).unwrap();
    let diag: Vec<f64> = (0..4).map(|i| m.get(i, i).re).collect();
    assert_eq!(diag, vec![1.0, 0.0, 0.0, -1.0]);
}

#[test]
fn pauli_matrix_xyz_is_hermitian() {
    let m = pauli_matrix(&xyz_observable(2.0, 1.0, 0.5)).unwrap();
    assert!(m.hermiticity_defect() < 1e-12);
}

#[test]
fn pauli_matrix_respects_cap() {
    let obs = Observable::new(11, vec![(1.0, PauliString::identity(11))]).unwrap();
    assert!(matches!(
        pauli_matrix(&obs).unwrap_err(),
        Error::SizeCapExceeded { .. }
    ));
}

// --- ground_energy -----------------------------------------------------------

#[test]
fn ground_energy_single_z() {
    let obs = Observable::new(1, vec![(1.0, PauliString::single(1, 0, Pauli::Z))]).unwrap();
    assert!((ground_energy(&obs).unwrap() + 1.0).abs() < 1e-9);
}

#[test]
fn ground_energy_two_uncoupled_spins() {
    let obs = Observable::new(
        2,
        vec![
            (-1.0, PauliString::parse("ZI").unwrap()),
            (-1.0, PauliString::parse("IZ").unwrap()),
        ],
    )
    .unwrap();
    assert!((ground_energy(&obs).unwrap() + 2.0).abs() < 1e-9);
}

#[test]
fn ground_energy_xyz_matches_frozen_dense_diagonalization() {
    // frozen constant from a dense full diagonalization of the 16x16 matrix
    let obs = xyz_observable(2.0, 1.0, 0.5);
    let e = ground_energy(&obs).unwrap();
    assert!((e - (-9.8486879840404935)).abs() < 1e-7, "e = {e}");
}

#[test]
fn ground_energy_matches_jacobi_oracle_on_random_observables() {
    let mut rng = rng_from_seed(31);
    for n in 2..=3 {
        for _ in 0..5 {
            let obs = random_observable(n, &mut rng);
            let h = pauli_matrix(&obs).unwrap();
            let (eigs, _) = jacobi_hermitian_eigen(&h);
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            let e = ground_energy(&obs).unwrap();
            assert!((e - min).abs() < 1e-7, "lanczos {e} vs jacobi {min}");
        }
    }
}

// --- circuit_unitary ----------------------------------------------------------

#[test]
fn empty_layout_unitary_is_identity() {
    let layout = CircuitLayout::new(2, vec![], 0).unwrap();
    let u = circuit_unitary(&layout, &[]).unwrap();
    assert!(u.max_abs_diff(&CMatrix::identity(4)) < 1e-12);
}

#[test]
fn single_cnot_unitary_is_permutation() {
    let layout = CircuitLayout::new(2, vec![GateOp::cnot(0, 1)], 1).unwrap();
    let u = circuit_unitary(&layout, &[]).unwrap();
    let mut expected = CMatrix::zeros(4);
    expected.set(0, 0, c(1.0, 0.0));
    expected.set(1, 1, c(1.0, 0.0));
    expected.set(3, 2, c(1.0, 0.0));
    expected.set(2, 3, c(1.0, 0.0));
    assert!(u.max_abs_diff(&expected) < 1e-12);
}

#[test]
fn unitary_columns_match_statevector_oracle() {
    let mut rng = rng_from_seed(77);
    let task = crate::tasks::build_task(
        crate::tasks::TaskFamily::QPulse,
        &[0.3, 0.2, 0.4, 1.0],
        0,
    )
    .unwrap();
    let theta: Vec<f64> = (0..24).map(|_| uniform_angle(&mut rng)).collect();
    let u = circuit_unitary(&task.layout, &theta).unwrap();
    for basis in 0..4 {
        let mut amps = vec![c(0.0, 0.0); 4];
        amps[basis] = c(1.0, 0.0);
        let mut state = StateVector::from_amplitudes(amps).unwrap();
        for gate in &task.layout.gates {
            state = apply_gate(&state, gate, &theta).unwrap();
        }
        for row in 0..4 {
            assert!((u.get(row, basis) - state.amplitudes()[row]).norm() < 1e-10);
        }
    }
}

// --- hermitian_exp -------------------------------------------------------------

#[test]
fn exp_of_zero_is_identity() {
    let h = CMatrix::zeros(4);
    let u = hermitian_exp(&h, 1.3).unwrap();
    assert!(u.max_abs_diff(&CMatrix::identity(4)) < 1e-12);
}

#[test]
fn exp_of_z_is_diagonal_phases() {
    let obs = Observable::new(1, vec![(1.0, PauliString::single(1, 0, Pauli::Z))]).unwrap();
    let h = pauli_matrix(&obs).unwrap();
    let theta = 0.9;
    let u = hermitian_exp(&h, theta).unwrap();
    assert!((u.get(0, 0) - Complex64::from_polar(1.0, -theta)).norm() < 1e-12);
    assert!((u.get(1, 1) - Complex64::from_polar(1.0, theta)).norm() < 1e-12);
    assert!(u.get(0, 1).norm() < 1e-14);
}

#[test]
fn exp_matches_eigendecomposition_oracle() {
    let mut rng = rng_from_seed(5);
    for _ in 0..5 {
        let h = random_hermitian(4, &mut rng);
        let t = crate::rng::uniform_in(&mut rng, -2.0, 2.0);
        let fast = hermitian_exp(&h, t).unwrap();
        let (eigs, v) = jacobi_hermitian_eigen(&h);
        // V diag(e^{-i eig t}) V^dag
        let mut d = CMatrix::zeros(4);
        for (i, e) in eigs.iter().enumerate() {
            d.set(i, i, Complex64::from_polar(1.0, -e * t));
        }
        let expected = v.matmul(&d).matmul(&v.adjoint());
        assert!(
            fast.max_abs_diff(&expected) < 1e-9,
            "diff {}",
            fast.max_abs_diff(&expected)
        );
    }
}

#[test]
fn exp_rejects_non_hermitian() {
    let mut m = CMatrix::zeros(2);
    m.set(0, 1, c(1.0, 0.0));
    assert!(matches!(
        hermitian_exp(&m, 1.0).unwrap_err(),
        Error::NotHermitian { .. }
    ));
}

// --- gate_fidelity --------------------------------------------------------------

#[test]
fn fidelity_of_identical_unitaries_is_one() {
    let mut rng = rng_from_seed(2);
    let h = random_hermitian(4, &mut rng);
    let u = hermitian_exp(&h, 0.8).unwrap();
    assert!((gate_fidelity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn fidelity_of_traceless_pair_is_zero() {
    let obs = Observable::new(2, vec![(1.0, PauliString::parse("XI").unwrap())]).unwrap();
    // exp(-i (pi/2) XI) = -i XI, proportional to X tensor I
    let x_tensor_i = pauli_matrix(&obs).unwrap();
    let f = gate_fidelity(&CMatrix::identity(4), &x_tensor_i).unwrap();
    assert!(f.abs() < 1e-12);
}

#[test]
fn fidelity_is_global_phase_invariant() {
    let mut rng = rng_from_seed(3);
    let h = random_hermitian(4, &mut rng);
    let u = hermitian_exp(&h, 0.5).unwrap();
    let phased = u.scale(Complex64::from_polar(1.0, 1.234));
    assert!((gate_fidelity(&u, &phased).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn fidelity_dimension_mismatch() {
    assert!(matches!(
        gate_fidelity(&CMatrix::identity(2), &CMatrix::identity(4)).unwrap_err(),
        Error::DimensionMismatch { .. }
    ));
}

// --- invariants -------------------------------------------------------------------

#[test]
fn norm_preserved_through_random_circuits() {
    let mut rng = rng_from_seed(99);
    for family in crate::tasks::TaskFamily::ALL {
        let params = crate::tasks::sample_task_params(family, &mut rng);
        let task = crate::tasks::build_task(family, &params, 19).unwrap();
        for _ in 0..10 {
            let theta: Vec<f64> = (0..task.layout.n_params)
                .map(|_| uniform_angle(&mut rng))
                .collect();
            let state = run_circuit(&task.layout, &theta).unwrap();
            assert!((state.norm_sq() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn circuit_unitary_and_exp_are_unitary() {
    let mut rng = rng_from_seed(57);
    let task = crate::tasks::build_task(crate::tasks::TaskFamily::Xyz1d, &[1.3, 0.2, 1.9], 0)
        .unwrap();
    for _ in 0..5 {
        let theta: Vec<f64> = (0..8).map(|_| uniform_angle(&mut rng)).collect();
        let u = circuit_unitary(&task.layout, &theta).unwrap();
        assert!(u.unitarity_defect() < 1e-8);
        let h = random_hermitian(8, &mut rng);
        let e = hermitian_exp(&h, 1.1).unwrap();
        assert!(e.unitarity_defect() < 1e-8);
    }
}

#[test]
fn variational_bound_holds_for_random_angles() {
    let mut rng = rng_from_seed(123);
    let obs = xyz_observable(2.0, 1.0, 0.5);
    let e0 = ground_energy(&obs).unwrap();
    let task = crate::tasks::build_task(crate::tasks::TaskFamily::Xyz1d, &[2.0, 1.0, 0.5], 0)
        .unwrap();
    for _ in 0..100 {
        let theta: Vec<f64> = (0..8).map(|_| uniform_angle(&mut rng)).collect();
        let state = run_circuit(&task.layout, &theta).unwrap();
        let e = expectation(&state, &obs).unwrap();
        assert!(e >= e0 - 1e-9, "energy {e} below ground {e0}");
    }
}

#[test]
fn tridiagonal_eigensolver_matches_jacobi() {
    let mut rng = rng_from_seed(44);
    for n in [2usize, 5, 9] {
        let mut d: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mut e: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        e[n - 1] = 0.0;
        // dense copy as Hermitian CMatrix
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, c(d[i], 0.0));
            if i + 1 < n {
                m.set(i, i + 1, c(e[i], 0.0));
                m.set(i + 1, i, c(e[i], 0.0));
            }
        }
        let (mut jac, _) = jacobi_hermitian_eigen(&m);
        jac.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        super::lanczos::tridiagonal_eigen(&mut d, &mut e, &mut z).unwrap();
        for (a, b) in d.iter().zip(&jac) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
