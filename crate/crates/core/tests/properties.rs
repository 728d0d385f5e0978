use num_complex::Complex64;
use proptest::prelude::*;

use ptsusy::cli::{fmt_float, parse_args};
use ptsusy::model::{make_pt_trap, PotentialField};
use ptsusy::oracle::{char_fn, find_exceptional_point, oracle_eigenvalues};
use ptsusy::pipeline::refined_grid;
use ptsusy::shooting::{seed_from_kappa, solve_state, ShootingConfig};
use ptsusy::susy::{superpotential_family, superpotential_standard, verify_factorization, XiConstant};

const A: f64 = 2.2;

fn shifted(gamma: f64, kappa: Complex64) -> PotentialField {
    PotentialField::original(make_pt_trap(gamma, A, 0.0, kappa * kappa).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn char_fn_commutes_with_conjugation(re in 0.01f64..2.0, im in -1.0f64..1.0, gamma in 0.0f64..1.0, a in 0.5f64..4.0) {
        let k = Complex64::new(re, im);
        let lhs = char_fn(k.conj(), gamma, a);
        let rhs = char_fn(k, gamma, a).conj();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn oracle_roots_pair_up(gamma in 0.0f64..0.8) {
        let gc = find_exceptional_point(A).unwrap().gamma_crit;
        prop_assume!((gamma - gc).abs() > 1e-6);
        let r = oracle_eigenvalues(gamma, A).unwrap();
        prop_assert!(char_fn(r.kappa0, gamma, A).norm() < 1e-10);
        prop_assert!(char_fn(r.kappa1, gamma, A).norm() < 1e-10);
        if gamma < gc {
            prop_assert!(r.kappa0.im.abs() < 1e-12 && r.kappa1.im.abs() < 1e-12);
            prop_assert!(r.kappa0.re > r.kappa1.re);
        } else {
            prop_assert!((r.kappa1 - r.kappa0.conj()).norm() < 1e-10);
            prop_assert!(r.kappa0.im < 0.0);
        }
    }

    #[test]
    fn jumps_and_factorization_hold_across_the_family(
        gamma in 0.05f64..0.6,
        xi_re in -3.0f64..3.0,
        xi_im in 0.0f64..3.0,
    ) {
        let r = oracle_eigenvalues(gamma, A).unwrap();
        prop_assume!((r.kappa0 - r.kappa1).norm() > 1e-6);
        let k = r.kappa0;
        let trap = make_pt_trap(gamma, A, 0.0, Complex64::new(0.0, 0.0)).unwrap();
        let v1 = PotentialField::original(trap.with_shift(k * k));
        let mut ws = vec![superpotential_standard(k, gamma, A).unwrap()];
        if let Ok(w) = superpotential_family(k, gamma, A, XiConstant::Finite(Complex64::new(xi_re, xi_im))) {
            ws.push(w);
        }
        for w in &ws {
            prop_assert!(verify_factorization(w, &v1) < 1e-8);
            for (region, (pos, s)) in [(-A / 2.0, trap.nu().conj()), (A / 2.0, trap.nu())].into_iter().enumerate() {
                let jump = w.value_in_region(region + 1, pos) - w.value_in_region(region, pos);
                prop_assert!((jump + s).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn floats_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        prop_assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn refined_grids_are_sorted(from in 0.0f64..0.3, len in 0.0f64..0.5, step in 0.001f64..0.1) {
        let g = refined_grid(from, from + len, step, Some(0.4005));
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(g.iter().all(|&x| x >= from - 1e-12 && x <= from + len + 1e-9));
    }

    #[test]
    fn config_file_and_flags_agree(
        gamma in 0.0f64..0.6,
        a in 1.5f64..3.0,
        state in 0u8..2,
        xi_re in -3.0f64..3.0,
        step in 1e-4f64..1e-2,
        jobs in 1usize..4,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let text = format!(
            "# partner run\ngamma = {gamma}\na={a}\nstate={state}\nxi-re = {xi_re}\nstep={step}\njobs={jobs}\nformat=json\nemit-plot=true\n"
        );
        std::fs::write(&path, text).unwrap();
        let from_file = parse_args(["ptsusy", "partner", "--config", path.to_str().unwrap()]).unwrap();
        let flags = [
            "ptsusy".to_string(), "partner".into(),
            "--gamma".into(), gamma.to_string(), "--a".into(), a.to_string(),
            "--state".into(), state.to_string(), "--xi-re".into(), xi_re.to_string(),
            "--step".into(), step.to_string(), "--jobs".into(), jobs.to_string(),
            "--format".into(), "json".into(), "--emit-plot".into(),
        ];
        let from_flags = parse_args(flags).unwrap();
        prop_assert_eq!(from_file, from_flags);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shooting_states_are_pt_symmetric_below_the_ep(gamma in 0.0f64..0.38, which in 0usize..2) {
        let r = oracle_eigenvalues(gamma, A).unwrap();
        let k = if which == 0 { r.kappa0 } else { r.kappa1 };
        let field = PotentialField::original(make_pt_trap(gamma, A, 0.0, Complex64::new(0.0, 0.0)).unwrap());
        let sol = solve_state(&field, &seed_from_kappa(&field, k).unwrap(), &ShootingConfig::default()).unwrap();
        prop_assert!((sol.kappa - k).norm() < 1e-8);
        prop_assert!(sol.pt_deviation() < 1e-8);
        prop_assert!((sol.norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn broken_pairs_are_conjugate(gamma in 0.42f64..0.8) {
        let r = oracle_eigenvalues(gamma, A).unwrap();
        let field = PotentialField::original(make_pt_trap(gamma, A, 0.0, Complex64::new(0.0, 0.0)).unwrap());
        let cfg = ShootingConfig::default();
        let s0 = solve_state(&field, &seed_from_kappa(&field, r.kappa0).unwrap(), &cfg).unwrap();
        let s1 = solve_state(&field, &seed_from_kappa(&field, r.kappa1).unwrap(), &cfg).unwrap();
        prop_assert!((s0.energy() - s1.energy().conj()).norm() < 1e-8);
    }

    #[test]
    fn standard_partner_energy_is_the_gap(gamma in 0.02f64..0.38) {
        let r = oracle_eigenvalues(gamma, A).unwrap();
        let w = superpotential_standard(r.kappa0, gamma, A).unwrap();
        let partner = ptsusy::susy::partner_potential(&w, &shifted(gamma, r.kappa0).trap).unwrap();
        let found = ptsusy::shooting::find_bound_states(&partner.field, 0.05, 1.2, 8, &ShootingConfig::default());
        prop_assert_eq!(found.len(), 1);
        let (e0, e1) = r.energies();
        prop_assert!((found[0].energy() - (e1 - e0)).norm() < 1e-6);
    }
}
