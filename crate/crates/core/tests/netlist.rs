mod common;

use std::collections::{BTreeMap, VecDeque};

use common::*;
use proptest::prelude::*;
use rand::Rng;
use xbar_core::design_space::enumerate_grid;
use xbar_core::netlist::{
    element_count, emit_spice, generate_crossbar_netlist, parse_spice, ConductanceTile, ElementKind, Netlist,
    NetlistError, Polarity,
};
use xbar_core::{BitcellName, DesignPoint, DeviceKind, DeviceName, GridSpec, Matrix, Mode, Partition};

fn single_cell() -> Netlist {
    let dp = design(1, DeviceName::Rram, BitcellName::OneT1R);
    let tile = ConductanceTile::new(Matrix::filled(1, 1, 1e-3), Matrix::filled(1, 1, 1e-12)).unwrap();
    let mut opts = options(&dp, vec![1.0]).zero_parasitic();
    opts.device = DeviceKind {
        name: DeviceName::Rram,
        r_on: 1000.0,
        r_off: 1e12,
    };
    generate_crossbar_netlist(&dp, &tile, &opts).unwrap()
}

#[test]
fn single_cell_matches_golden_file() {
    let text = emit_spice(&single_cell());
    let golden = std::fs::read_to_string(data_dir().join("golden_1x1.sp")).unwrap();
    assert_eq!(text, golden);
    assert_eq!(emit_spice(&single_cell()), text);
}

fn layer_84x10() -> Netlist {
    let mut dp = design(1, DeviceName::Rram, BitcellName::OneT1R);
    dp.rows = 84;
    dp.cols = 10;
    let dev = device(DeviceName::Rram);
    let tile = random_tile(&mut rng(84), 84, 10, &dev);
    generate_crossbar_netlist(&dp, &tile, &options(&dp, vec![0.5; 84])).unwrap()
}

#[test]
fn layer_netlist_line_count_in_band() {
    let text = emit_spice(&layer_84x10());
    let lines = text.lines().count();
    println!("84x10 1T1R parasitic netlist: {lines} lines");
    assert!((3000..=6000).contains(&lines), "{lines}");
    // 1680 memory + 1680 switch + 1512 row wire + 20 column lead + 168 source
    // cards, 168 word-line headers, title, 12 annotations and `.END`.
    assert_eq!(lines, 5242);
}

/// Node and element tallies by walking the generated netlist, independent of the formula.
fn tally(n: &Netlist) -> BTreeMap<&'static str, usize> {
    let mut t = BTreeMap::new();
    for e in &n.elements {
        let cat = match (e.kind, &e.name[..2]) {
            (ElementKind::Switch, _) => "switch",
            (ElementKind::VSource, _) => "source",
            (ElementKind::Resistor, "RM") => "memory",
            (ElementKind::Resistor, "RW") => "row",
            (ElementKind::Resistor, "RC") => "column",
            _ => "other",
        };
        *t.entry(cat).or_insert(0) += 1;
    }
    t
}

#[test]
fn element_counts_follow_closed_form() {
    let mut r = rng(21);
    for bitcell in BitcellName::ALL {
        for wired in [false, true] {
            for (h, v) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
                let mut dp = design(4, DeviceName::Pcm, bitcell);
                dp.partition = Partition { h_parts: h, v_parts: v };
                let tile = random_tile(&mut r, 4, 4, &device(DeviceName::Pcm));
                let mut opts = options(&dp, random_input(&mut r, 4));
                if !wired {
                    opts = opts.zero_parasitic();
                }
                let n = generate_crossbar_netlist(&dp, &tile, &opts).unwrap();
                let t = tally(&n);
                let c = element_count(&dp, wired);
                let get = |k| t.get(k).copied().unwrap_or(0);
                let per_cell = if bitcell == BitcellName::TwoT1R { 2 } else { 1 };
                assert_eq!(get("memory"), 32);
                assert_eq!(get("switch"), 32 * per_cell);
                assert_eq!(get("row"), if wired { 2 * 4 * (4 - v) } else { 0 });
                assert_eq!(get("column"), if wired { 2 * 4 * h } else { 0 });
                assert_eq!(get("source"), 2 * 4 * v);
                assert_eq!(get("other"), 0);
                assert_eq!(
                    (c.memory, c.switches, c.row_wires, c.column_leads, c.sources),
                    (get("memory"), get("switch"), get("row"), get("column"), get("source"))
                );
            }
        }
    }
}

/// Every node reaches ground through element edges and touches at least two terminals.
fn assert_connected(n: &Netlist) {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut degree: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &n.elements {
        let (a, b) = e.terminals();
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    let mut seen = std::collections::BTreeSet::from(["0"]);
    let mut queue = VecDeque::from(["0"]);
    while let Some(x) = queue.pop_front() {
        for y in adj.get(x).into_iter().flatten() {
            if seen.insert(y) {
                queue.push_back(y);
            }
        }
    }
    for (node, d) in &degree {
        assert!(seen.contains(node), "{node} cannot reach ground");
        assert!(*d >= 2 || *node == "0", "{node} has one terminal");
    }
}

#[test]
fn default_grid_netlists_are_connected_and_counted() {
    let grid = GridSpec {
        sizes: vec![16],
        ..GridSpec::default()
    };
    let mut r = rng(22);
    for dp in enumerate_grid(&grid).unwrap().into_iter().step_by(7) {
        let dev = device(dp.device);
        let tile = random_tile(&mut r, dp.rows, dp.cols, &dev);
        for wired in [false, true] {
            let mut opts = options(&dp, random_input(&mut r, dp.rows));
            if !wired {
                opts = opts.zero_parasitic();
            }
            let n = generate_crossbar_netlist(&dp, &tile, &opts).unwrap();
            assert_connected(&n);
            assert_eq!(n.elements.len(), element_count(&dp, wired).total());
        }
    }
}

#[test]
fn contract_errors() {
    let dp = design(4, DeviceName::Rram, BitcellName::OneT1R);
    let dev = device(DeviceName::Rram);
    let tile = random_tile(&mut rng(1), 4, 4, &dev);
    let short = options(&dp, vec![0.1; 3]);
    assert!(matches!(generate_crossbar_netlist(&dp, &tile, &short), Err(NetlistError::Shape(_))));
    let wrong = random_tile(&mut rng(1), 3, 4, &dev);
    assert!(matches!(
        generate_crossbar_netlist(&dp, &wrong, &options(&dp, vec![0.1; 4])),
        Err(NetlistError::Shape(_))
    ));
    let mut bad = tile.clone();
    bad.g_neg.set(2, 3, 10.0 * dev.g_on());
    match generate_crossbar_netlist(&dp, &bad, &options(&dp, vec![0.1; 4])) {
        Err(NetlistError::OutOfRange { i, j, polarity, .. }) => assert_eq!((i, j, polarity), (2, 3, Polarity::Neg)),
        other => panic!("{other:?}"),
    }
    let mut neg = options(&dp, vec![0.1; 4]);
    neg.wire_r = -1.0;
    assert!(matches!(generate_crossbar_netlist(&dp, &tile, &neg), Err(NetlistError::Option(_))));
}

#[test]
fn parser_messages() {
    let e = parse_spice("R1 a b -5\n.END\n").unwrap_err();
    assert!(e.message.contains("non-positive resistance"), "{e}");
    assert_eq!((e.line, e.token.as_str()), (1, "-5"));

    let e = parse_spice("* header\nR1 a 0 1k\nQ1 a b c\n.END\n").unwrap_err();
    assert!(e.message.contains("unsupported element kind at line 3"), "{e}");
    assert_eq!((e.line, e.column), (3, 1));

    let e = parse_spice("R1 a 0 1k\nR2 a 0 2k\nR1 a 0 3k\n").unwrap_err();
    assert!(e.message.contains('1') && e.message.contains('3'), "{e}");

    let n = parse_spice("*@title t\nR1 a 0 2.2MEG\nV1 a 0 DC 1.5\nR2 a 0 10kohm\n.end\nR3 x y 1\n").unwrap();
    assert_eq!(n.elements.len(), 3);
    assert!((n.elements[0].value - 2.2e6).abs() < 1e-6);
    assert_eq!(n.elements[2].value, 1e4);
    assert_eq!(emit_spice(&Netlist::new("")), "*@title \n.END\n");
}

fn random_netlist(seed: u64) -> Netlist {
    let mut r = rng(seed);
    let bitcell = BitcellName::ALL[r.gen_range(0..2)];
    let dev_name = [DeviceName::Rram, DeviceName::Pcm, DeviceName::Mram, DeviceName::Cbram][r.gen_range(0..4)];
    let rows = [1, 2, 4, 6, 8][r.gen_range(0..5)];
    let cols = [1, 2, 4, 6, 8][r.gen_range(0..5)];
    let mut dp = DesignPoint::new([7, 9, 14, 20][r.gen_range(0..4)], dev_name, bitcell, rows, Mode::Analog);
    dp.cols = cols;
    let h = if rows % 2 == 0 { r.gen_range(1..=2) } else { 1 };
    let v = if cols % 2 == 0 { r.gen_range(1..=2) } else { 1 };
    dp.partition = Partition { h_parts: h, v_parts: v };
    let tile = random_tile(&mut r, rows, cols, &device(dev_name));
    let mut opts = options(&dp, (0..rows).map(|_| r.gen_range(-1.0..1.0)).collect());
    if r.gen_bool(0.3) {
        opts = opts.zero_parasitic();
    }
    opts.tile_index = r.gen_bool(0.5).then(|| (r.gen_range(0..4), r.gen_range(0..4)));
    generate_crossbar_netlist(&dp, &tile, &opts).unwrap()
}

#[test]
fn round_trip_over_100_generated_netlists() {
    for seed in 0..100 {
        let n = random_netlist(seed);
        let text = emit_spice(&n);
        let back = parse_spice(&text).unwrap();
        assert!(back.same_structure(&n), "seed {seed}");
        assert_eq!(back, n, "seed {seed}");
        assert_eq!(emit_spice(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_inverts_emit(seed in any::<u64>()) {
        let n = random_netlist(seed);
        prop_assert!(parse_spice(&emit_spice(&n)).unwrap().same_structure(&n));
    }

    #[test]
    fn round_trip_ignores_element_order_and_blank_lines(seed in any::<u64>(), shift in 0usize..1000) {
        let n = random_netlist(seed);
        let mut shuffled = n.clone();
        let k = shift % shuffled.elements.len();
        shuffled.elements.rotate_left(k);
        let text = emit_spice(&shuffled).replace('\n', "\n\n");
        prop_assert!(parse_spice(&text).unwrap().same_structure(&n));
    }

    #[test]
    fn line_count_grows_with_cells(rows in 1usize..12, cols in 1usize..12) {
        let mut dp = design(1, DeviceName::Pcm, BitcellName::OneT1R);
        dp.rows = rows;
        dp.cols = cols;
        let tile = ConductanceTile::uniform(rows, cols, device(DeviceName::Pcm).g_on());
        let n = generate_crossbar_netlist(&dp, &tile, &options(&dp, vec![0.2; rows])).unwrap();
        let lines = emit_spice(&n).lines().count();
        // 2 memory + 2 switch + 2 row-wire cards per cell, bounded by the fixed header.
        prop_assert!(lines >= 4 * rows * cols && lines <= 6 * rows * cols + 4 * rows + 2 * cols + 20);
    }
}
