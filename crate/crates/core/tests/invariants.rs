use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use qwz_ness::baths::{build_self_energies, occupation, BathSpec, Reservoir, Statistics};
use qwz_ness::lattice::{build_hamiltonian, single_particle_spectrum, Flavor, ImpuritySet, LatticeSpec, SiteIndex};
use qwz_ness::negf::{effective_hamiltonian, steady_correlation, QuadratureSpec};
use qwz_ness::observables::{bond_currents, landauer_total};
use qwz_ness::semiclassical::{bulk_cancellation_check, chern_number, symmetric_occupation, Band, KGrid};
use qwz_ness::symmetry::{classify_impurities, symmetric_spectrum, SymmetryAction};
use qwz_ness::weakcoupling::{jump_decomposition_check, lindblad_residual, mode_couplings, weak_coupling_correlation};

fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn sorted_eigs(h: &Array2<Complex64>, spec: &LatticeSpec) -> Vec<f64> {
    let h = qwz_ness::lattice::Hamiltonian { spec: spec.clone(), matrix: h.clone() };
    single_particle_spectrum(&h).unwrap().energies.to_vec()
}

fn lattice() -> impl Strategy<Value = LatticeSpec> {
    (2usize..6, 1usize..6, 0.5f64..1.5, 0.5f64..1.5, -3.5f64..3.5)
        .prop_map(|(lx, ly, tx, ty, m)| LatticeSpec::new(lx, ly, tx, ty, m, 10.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_index_round_trips(lx in 2usize..9, ly in 1usize..9, sx in 0usize..64, sy in 0usize..64, up in any::<bool>()) {
        let spec = LatticeSpec::new(lx, ly, 1.0, 1.0, 1.0, 10.0).unwrap();
        let flavor = if up { Flavor::Up } else { Flavor::Down };
        let site = SiteIndex::new(1 + sx % lx, 1 + sy % ly, flavor);
        let k = spec.flat_index(site).unwrap();
        prop_assert!(k < spec.dim());
        prop_assert_eq!(spec.site_of(k).unwrap(), site);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_nearest_neighbour(spec in lattice(), ix in 0usize..8, iy in 0usize..8) {
        let imp = ImpuritySet::at(&[(1 + ix % spec.lx, 1 + iy % spec.ly)]).with_delta(3.0);
        let h = build_hamiltonian(&spec, &imp).unwrap();
        let scale = max_abs(&h.matrix);
        let defect = max_abs(&(&h.matrix - &h.matrix.t().mapv(|z| z.conj())));
        prop_assert!(defect < 1e-14 * scale);
        for ((i, j), z) in h.matrix.indexed_iter() {
            if z.norm() == 0.0 {
                continue;
            }
            let (a, b) = (spec.site_of(i).unwrap(), spec.site_of(j).unwrap());
            let hops = a.x.abs_diff(b.x) + a.y.abs_diff(b.y);
            prop_assert!(hops <= 1, "coupling between {:?} and {:?}", a, b);
        }
    }

    #[test]
    fn spectrum_is_even_in_m_up_to_flavor_swap(spec in lattice()) {
        let none = ImpuritySet::none();
        let h = build_hamiltonian(&spec, &none).unwrap();
        let flipped = LatticeSpec { m: -spec.m, ..spec.clone() };
        let hf = build_hamiltonian(&flipped, &none).unwrap();
        let a = sorted_eigs(&h.matrix, &spec);
        let b = sorted_eigs(&hf.matrix, &flipped);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn square_spectrum_is_r_pi_invariant(l in 2usize..6, m in -3.5f64..3.5) {
        let spec = LatticeSpec::square(l, m, 10.0).unwrap();
        let h = build_hamiltonian(&spec, &ImpuritySet::none()).unwrap();
        let rotated = SymmetryAction::r_pi(&spec).apply(&h.matrix);
        let a = sorted_eigs(&h.matrix, &spec);
        let b = sorted_eigs(&rotated, &spec);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn occupations_are_bounded_and_decreasing(t in 0.01f64..10.0, mu in -5.0f64..5.0, w in -20.0f64..20.0, dw in 1e-3f64..5.0) {
        let f1 = occupation(w, t, mu, Statistics::Fermion).unwrap();
        let f2 = occupation(w + dw, t, mu, Statistics::Fermion).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1) && f2 <= f1);
        let above = mu + dw;
        let b1 = occupation(above, t, mu, Statistics::Boson).unwrap();
        let b2 = occupation(above + dw, t, mu, Statistics::Boson).unwrap();
        prop_assert!(b1 >= 0.0 && b2 <= b1);
        prop_assert!(occupation(mu - dw, t, mu, Statistics::Boson).is_err());
    }

    #[test]
    fn self_energies_live_on_the_end_columns(spec in lattice(), gamma in 1e-4f64..1.0) {
        let bath = BathSpec::new(Statistics::Fermion, 1.0, 0.1, 10.0, gamma).unwrap();
        let se = build_self_energies(&spec, &bath).unwrap();
        for k in 0..spec.dim() {
            let x = spec.site_of(k).unwrap().x;
            prop_assert_eq!(se.hot[k], if x == 1 { gamma } else { 0.0 });
            prop_assert_eq!(se.cold[k], if x == spec.lx { gamma } else { 0.0 });
        }
    }

    #[test]
    fn chern_number_follows_the_phase_diagram(m in prop_oneof![-3.5f64..-2.2, -1.8f64..-0.2, 0.2f64..1.8, 2.2f64..3.5]) {
        let spec = LatticeSpec::square(2, m, 10.0).unwrap();
        let lower = chern_number(&spec, Band::Minus, 60).unwrap();
        let upper = chern_number(&spec, Band::Plus, 60).unwrap();
        let expected = if m.abs() > 2.0 { 0 } else { m.signum() as i32 };
        prop_assert_eq!(lower.value, expected);
        prop_assert_eq!(upper.value, -expected);
    }

    #[test]
    fn band_velocity_cancels_in_the_bulk(m in 0.3f64..3.5, n in 10usize..60) {
        let spec = LatticeSpec::square(2, m, 10.0).unwrap();
        let bath = BathSpec::new(Statistics::Boson, 1.0, 0.01, 0.0, 0.01).unwrap();
        let occ = symmetric_occupation(&bath);
        prop_assert!(bulk_cancellation_check(&spec, &occ, KGrid::symmetric(n)).unwrap() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ness_conserves_current(
        lx in 2usize..5,
        ly in 1usize..4,
        m in -3.0f64..3.0,
        gamma in 0.01f64..1.0,
        t_h in 0.2f64..2.0,
        boson in any::<bool>(),
    ) {
        let spec = LatticeSpec::new(lx, ly, 1.0, 1.0, m, 10.0).unwrap();
        let h = build_hamiltonian(&spec, &ImpuritySet::none()).unwrap();
        let bath = if boson {
            BathSpec::new(Statistics::Boson, t_h, 0.05, 0.0, gamma).unwrap()
        } else {
            BathSpec::new(Statistics::Fermion, t_h, 0.05, 9.7, gamma).unwrap()
        };
        let se = build_self_energies(&spec, &bath).unwrap();
        let eff = effective_hamiltonian(&h, &se).unwrap();
        prop_assert!(eff.max_imag() < 0.0);
        let quad = QuadratureSpec::default();
        let c = steady_correlation(&eff, &se, &bath, &quad).unwrap();
        prop_assert!(c.hermiticity_defect() < 1e-14);
        prop_assert!(c.is_physical(bath.statistics, 1e-9).unwrap());

        let field = bond_currents(&c, &spec).unwrap();
        let lan = landauer_total(&eff, &se, &bath, &quad).unwrap().j_tot;
        let sums = field.column_sums();
        let scale = lan.abs().max(1e-12);
        for s in &sums {
            prop_assert!((s - lan).abs() < 1e-7 * scale, "column {} vs Landauer {}", s, lan);
        }
        prop_assert!(field.max_interior_divergence() <= 1e-8 * field.max_abs().max(1e-4));
    }

    #[test]
    fn symmetric_lattices_couple_modes_evenly(lx in 2usize..7, ly in 1usize..6, m in -3.0f64..3.0) {
        let spec = LatticeSpec::new(lx, ly, 1.0, 1.0, m, 10.0).unwrap();
        let h = build_hamiltonian(&spec, &ImpuritySet::none()).unwrap();
        let (sp, used) = symmetric_spectrum(&h).unwrap();
        prop_assert!(used.is_some());
        let k = mode_couplings(&sp, &spec).unwrap();
        prop_assert!(k.max_asymmetry() < 1e-12);
        let total_s: f64 = k.s.iter().sum();
        prop_assert!((total_s - 2.0 * ly as f64).abs() < 1e-10);
    }

    #[test]
    fn symmetric_impurities_keep_the_balance(l in 3usize..7, x in 1usize..7, y in 1usize..7) {
        let spec = LatticeSpec::square(l, 1.0, 10.0).unwrap();
        let (x, y) = (1 + (x - 1) % l, 1 + (y - 1) % l);
        let imp = ImpuritySet::at(&[(x, y), (l + 1 - x, l + 1 - y)]);
        let class = classify_impurities(&imp, &spec);
        prop_assert!(class.r_pi_symmetric);
        let h = build_hamiltonian(&spec, &imp).unwrap();
        let (sp, _) = symmetric_spectrum(&h).unwrap();
        prop_assert!(mode_couplings(&sp, &spec).unwrap().max_asymmetry() < 1e-10);
    }

    #[test]
    fn secular_state_is_a_lindblad_fixed_point(
        lx in 2usize..5,
        ly in 1usize..4,
        m in 0.2f64..3.0,
        gamma in 1e-5f64..1e-2,
        boson in any::<bool>(),
    ) {
        let spec = LatticeSpec::new(lx, ly, 1.0, 1.0, m, 10.0).unwrap();
        let h = build_hamiltonian(&spec, &ImpuritySet::none()).unwrap();
        let (sp, _) = symmetric_spectrum(&h).unwrap();
        let k = mode_couplings(&sp, &spec).unwrap();
        let bath = if boson {
            BathSpec::new(Statistics::Boson, 1.0, 0.01, 0.0, gamma).unwrap()
        } else {
            BathSpec::new(Statistics::Fermion, 1.0, 0.01, 9.9, gamma).unwrap()
        };
        let c = weak_coupling_correlation(&sp, &k, &bath).unwrap();
        prop_assert!(lindblad_residual(&sp, &k, &bath, &c).unwrap() < 1e-12 * gamma);
        prop_assert!(jump_decomposition_check(&sp, &k, &bath).unwrap());
        let mean = |w: f64| 0.5 * (bath.distribution(w, Reservoir::Hot).unwrap() + bath.distribution(w, Reservoir::Cold).unwrap());
        let u = &sp.modes;
        let diag = u.t().mapv(|z| z.conj()).dot(&c.matrix).dot(u);
        for (a, &w) in sp.energies.iter().enumerate() {
            prop_assert!((diag[[a, a]].re - mean(w)).abs() < 1e-10);
        }
    }
}
