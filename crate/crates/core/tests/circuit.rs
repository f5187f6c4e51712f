mod common;

use std::time::Instant;

use common::*;
use proptest::prelude::*;
use xbar_core::circuit::{
    average_power, build_system, dac_quantize, ideal_mac, kcl_audit, solve, SolveMethod, Solver,
    SolveOptions,
};
use xbar_core::netlist::{generate_crossbar_netlist, ConductanceTile, Element, Netlist};
use xbar_core::{BitcellName, DeviceKind, DeviceName, Matrix};

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

#[test]
fn single_cell_drives_one_milliamp() {
    let dp = design(1, DeviceName::Rram, BitcellName::OneT1R);
    let dev = DeviceKind {
        name: DeviceName::Rram,
        r_on: 1000.0,
        r_off: 1e12,
    };
    let tile = ConductanceTile::new(Matrix::filled(1, 1, 1e-3), Matrix::filled(1, 1, 1e-12)).unwrap();
    let mut opts = options(&dp, vec![1.0]).zero_parasitic();
    opts.device = dev;
    let n = generate_crossbar_netlist(&dp, &tile, &opts).unwrap();
    assert_eq!(n.elements.iter().filter(|e| e.name.starts_with("RM")).count(), 2);
    assert_eq!(n.elements.iter().filter(|e| e.name.starts_with('V')).count(), 2);
    assert_eq!(n.elements.iter().filter(|e| e.name.starts_with("RW")).count(), 0);
    let rep = solve(&build_system(&n).unwrap(), 1e-10, None).unwrap();
    assert!((rep.column_currents[0] - 1e-3).abs() <= 1e-9 * 1e-3 + 1e-12);
}

#[test]
fn zero_parasitic_solve_equals_ideal_mac() {
    let mut r = rng(11);
    for size in [16, 32, 64] {
        for device_name in [DeviceName::Rram, DeviceName::Pcm, DeviceName::Mram] {
            let dp = design(size, device_name, BitcellName::OneT1R);
            let dev = device(device_name);
            for _ in 0..5 {
                let tile = random_tile(&mut r, size, size, &dev);
                let v = random_input(&mut r, size);
                let n = generate_crossbar_netlist(&dp, &tile, &options(&dp, v.clone()).zero_parasitic()).unwrap();
                let rep = solve(&build_system(&n).unwrap(), 1e-10, None).unwrap();
                let ideal = ideal_mac(&v, &tile).unwrap();
                let scale: Vec<f64> = (0..size)
                    .map(|j| (0..size).map(|i| v[i] * (tile.g_pos.get(i, j) + tile.g_neg.get(i, j))).sum())
                    .collect();
                for j in 0..size {
                    assert!(rel_err(rep.column_currents[j], ideal[j], scale[j]) <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn parasitic_64x64_uses_pcg_and_satisfies_kcl() {
    let mut r = rng(5);
    let dp = design(64, DeviceName::Pcm, BitcellName::OneT1R);
    let dev = device(DeviceName::Pcm);
    let tile = random_tile(&mut r, 64, 64, &dev);
    let v = random_input(&mut r, 64);
    let n = generate_crossbar_netlist(&dp, &tile, &options(&dp, v.clone())).unwrap();
    let t0 = Instant::now();
    let sys = build_system(&n).unwrap();
    assert!(sys.dimension() > 5000, "{}", sys.dimension());
    let solver = Solver::new(&sys, SolveOptions::default()).unwrap();
    assert!(matches!(solver.method(), SolveMethod::Pcg { .. }));
    let rep = solver.solve().unwrap();
    eprintln!(
        "dim {} iterations {} residual {:e} row {:e} in {:?}",
        sys.dimension(),
        rep.iterations,
        rep.residual_norm,
        rep.max_row_residual,
        t0.elapsed()
    );
    assert!(rep.residual_norm <= 1e-10);
    for e in kcl_audit(&sys, &rep) {
        assert!(e.residual.abs() <= 1e-9 * e.scale, "{e:?}");
    }
    // IR drop only reduces the magnitude of each polarity's column current.
    let ideal_p = ideal_mac(&v, &ConductanceTile::new(tile.g_pos.clone(), Matrix::zeros(64, 64)).unwrap()).unwrap();
    for j in 0..64 {
        assert!(rep.column_currents_pos[j] <= ideal_p[j] * (1.0 + 1e-12));
        assert!(rep.column_currents_pos[j] > 0.0);
    }
}

#[test]
fn direct_and_iterative_agree_on_32x32_parasitic() {
    let mut r = rng(9);
    let dp = design(32, DeviceName::Rram, BitcellName::TwoT1R);
    let dev = device(DeviceName::Rram);
    let tile = random_tile(&mut r, 32, 32, &dev);
    let n = generate_crossbar_netlist(&dp, &tile, &options(&dp, random_input(&mut r, 32))).unwrap();
    let sys = build_system(&n).unwrap();
    let direct = Solver::new(&sys, SolveOptions::default()).unwrap();
    assert_eq!(direct.method(), SolveMethod::Direct);
    let a = direct.solve().unwrap();
    let b = Solver::new(&sys, SolveOptions { direct_threshold: 0, ..Default::default() })
        .unwrap()
        .solve()
        .unwrap();
    for (x, y) in a.column_currents.iter().zip(&b.column_currents) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-9));
    }
    for e in kcl_audit(&sys, &a) {
        assert!(e.residual.abs() <= 1e-9 * e.scale, "{e:?}");
    }
}

#[test]
fn rayleigh_monotonicity_on_small_arrays() {
    let mut r = rng(3);
    let dev = device(DeviceName::Rram);
    for size in [2, 3, 4] {
        let dp = design(size, DeviceName::Rram, BitcellName::OneT1R);
        let mut tile = random_tile(&mut r, size, size, &dev);
        tile.g_neg = Matrix::filled(size, size, dev.g_off());
        let v = random_input(&mut r, size);
        let base = generate_crossbar_netlist(&dp, &tile, &options(&dp, v.clone())).unwrap();
        let drawn = |n: &Netlist| {
            let rep = solve(&build_system(n).unwrap(), 1e-12, None).unwrap();
            n.elements
                .iter()
                .zip(&rep.element_currents)
                .filter(|(e, _)| e.name.starts_with("VP"))
                .map(|(_, i)| *i)
                .sum::<f64>()
        };
        let i0 = drawn(&base);
        for (k, e) in base.elements.iter().enumerate() {
            if !(e.name.starts_with("RWP") || e.name.starts_with("RCP")) {
                continue;
            }
            let mut bumped = base.clone();
            bumped.elements[k].value *= 10.0;
            assert!(drawn(&bumped) <= i0 * (1.0 + 1e-12), "{}", e.name);
        }
    }
}

#[test]
fn power_matches_per_pattern_accounting() {
    let mut r = rng(21);
    let dp = design(16, DeviceName::Rram, BitcellName::OneT1R);
    let dev = device(DeviceName::Rram);
    let tile = random_tile(&mut r, 16, 16, &dev);
    let patterns: Vec<Vec<f64>> = (0..10).map(|_| random_input(&mut r, 16)).collect();
    let n = generate_crossbar_netlist(&dp, &tile, &options(&dp, vec![0.0; 16])).unwrap();
    let p = average_power(&n, &patterns, 1e-10).unwrap();

    // Oracle: regenerate per pattern and integrate g·ΔV² over every resistive element.
    let mut total = 0.0;
    for pat in &patterns {
        let np = generate_crossbar_netlist(&dp, &tile, &options(&dp, pat.clone())).unwrap();
        let sys = build_system(&np).unwrap();
        let rep = solve(&sys, 1e-12, None).unwrap();
        for (e, i) in np.elements.iter().zip(&rep.element_currents) {
            if e.value > 0.0 && !e.name.starts_with('V') {
                total += i * i * e.value;
            }
        }
    }
    let oracle = total / patterns.len() as f64;
    assert!((p - oracle).abs() <= 1e-9 * oracle, "{p} vs {oracle}");

    let mut reversed = patterns.clone();
    reversed.reverse();
    let q = average_power(&n, &reversed, 1e-10).unwrap();
    assert!((p - q).abs() <= 1e-12 * p);
    assert_eq!(average_power(&n, &vec![vec![0.0; 16]; 3], 1e-10).unwrap(), 0.0);
}

#[test]
fn single_resistor_power() {
    let n = Netlist {
        elements: vec![Element::vsource("V1", "a", "0", 1.0), Element::resistor("R1", "a", "0", 1000.0)],
        ..Default::default()
    };
    assert!((average_power(&n, &[vec![1.0]], 1e-10).unwrap() - 1e-3).abs() < 1e-15);
}

#[test]
fn dac_eight_bit_error_bound() {
    let vdd = 1.0;
    for k in 0..=100_000 {
        let x = k as f64 / 100_000.0;
        let y = dac_quantize(x, Some(8), vdd).unwrap();
        // Level spacing is vdd/255, so the worst-case error is vdd/510.
        assert!((y - x * vdd).abs() <= vdd / 510.0 + 1e-12);
        assert!((y - x * vdd).abs() <= vdd / 512.0 + 1e-5 * vdd);
    }
}

fn tile_strategy(rows: usize, cols: usize) -> impl Strategy<Value = ConductanceTile> {
    (
        prop::collection::vec(1e-6f64..1e-3, rows * cols),
        prop::collection::vec(1e-6f64..1e-3, rows * cols),
    )
        .prop_map(move |(p, n)| {
            ConductanceTile::new(
                Matrix::from_row_major(rows, cols, p).unwrap(),
                Matrix::from_row_major(rows, cols, n).unwrap(),
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn ideal_mac_is_linear(
        tile in tile_strategy(5, 4),
        v1 in prop::collection::vec(-1.0f64..1.0, 5),
        v2 in prop::collection::vec(-1.0f64..1.0, 5),
        alpha in -3.0f64..3.0,
    ) {
        let base1 = ideal_mac(&v1, &tile).unwrap();
        let base2 = ideal_mac(&v2, &tile).unwrap();
        let scaled: Vec<f64> = v1.iter().map(|x| alpha * x).collect();
        let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let s = ideal_mac(&scaled, &tile).unwrap();
        let t = ideal_mac(&sum, &tile).unwrap();
        let scale: f64 = 5.0 * 1e-3 * 3.0;
        for j in 0..4 {
            prop_assert!((s[j] - alpha * base1[j]).abs() <= 1e-12 * scale);
            prop_assert!((t[j] - base1[j] - base2[j]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn ideal_mac_matches_dense_product(tile in tile_strategy(8, 8), v in prop::collection::vec(0.0f64..1.0, 8)) {
        let got = ideal_mac(&v, &tile).unwrap();
        for j in 0..8 {
            let mut acc = 0.0;
            for i in 0..8 {
                acc += tile.g_pos.get(i, j) * v[i];
            }
            for i in 0..8 {
                acc -= tile.g_neg.get(i, j) * v[i];
            }
            let scale: f64 = (0..8).map(|i| v[i] * (tile.g_pos.get(i, j) + tile.g_neg.get(i, j))).sum();
            prop_assert!((got[j] - acc).abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn dac_is_idempotent(x in 0.0f64..=1.0, bits in 1u8..=12, vdd in 0.1f64..2.0) {
        let y = dac_quantize(x, Some(bits), vdd).unwrap();
        let again = dac_quantize((y / vdd).clamp(0.0, 1.0), Some(bits), vdd).unwrap();
        prop_assert!((y - again).abs() <= 1e-12 * vdd);
        let steps = ((1u32 << bits) - 1) as f64;
        prop_assert!((y - x * vdd).abs() <= vdd / (2.0 * steps) * (1.0 + 1e-12));
    }
}
