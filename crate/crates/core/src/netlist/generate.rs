use super::{ConductanceTile, Element, Netlist, NetlistError, Polarity, GROUND};
use crate::config::{DeviceKind, ResolvedDesign};
use crate::design_space::DesignPoint;

/// Relative slack on the device conductance window, absorbing `1/(1/g)` rounding.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    /// Interconnect resistance per cell pitch, ohms.
    pub wire_r: f64,
    pub vdd: f64,
    /// Row drive voltages relative to `V_ref`, one per row.
    pub input: Vec<f64>,
    pub device: DeviceKind,
    /// On-resistance per access transistor, ohms.
    pub access_resistance: f64,
    /// Recorded in annotations only.
    pub wire_c_ff: f64,
    /// Position of this tile within a layer, recorded in annotations.
    pub tile_index: Option<(usize, usize)>,
}

impl GenerateOptions {
    pub fn from_resolved(r: &ResolvedDesign, input: Vec<f64>) -> Self {
        Self {
            wire_r: r.wire_r,
            vdd: r.vdd,
            input,
            device: r.device,
            access_resistance: r.bitcell.access_resistance,
            wire_c_ff: r.wire_c_ff,
            tile_index: None,
        }
    }

    /// No interconnect and ideal access switches.
    pub fn zero_parasitic(mut self) -> Self {
        self.wire_r = 0.0;
        self.access_resistance = 0.0;
        self
    }
}

/// Closed-form element tally for one generated netlist (both polarities).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ElementCount {
    pub memory: usize,
    pub switches: usize,
    pub row_wires: usize,
    pub column_leads: usize,
    pub sources: usize,
}

impl ElementCount {
    pub fn total(&self) -> usize {
        self.memory + self.switches + self.row_wires + self.column_leads + self.sources
    }
}

pub fn element_count(dp: &DesignPoint, has_wires: bool) -> ElementCount {
    let (r, c) = (dp.rows, dp.cols);
    let (h, v) = (dp.partition.h_parts, dp.partition.v_parts);
    let wires = usize::from(has_wires);
    ElementCount {
        memory: 2 * r * c,
        switches: 2 * r * c * dp.bitcell.switches_per_cell(),
        row_wires: 2 * wires * r * (c - v),
        column_leads: 2 * wires * c * h,
        sources: 2 * r * v,
    }
}

pub fn generate_crossbar_netlist(
    dp: &DesignPoint,
    tile: &ConductanceTile,
    opts: &GenerateOptions,
) -> Result<Netlist, NetlistError> {
    dp.validate()
        .map_err(|e| NetlistError::Shape(e.to_string()))?;
    if tile.shape() != (dp.rows, dp.cols) || tile.g_neg.shape() != (dp.rows, dp.cols) {
        return Err(NetlistError::Shape(format!(
            "tile is {:?} but design is {}x{}",
            tile.shape(),
            dp.rows,
            dp.cols
        )));
    }
    if opts.input.len() != dp.rows {
        return Err(NetlistError::Shape(format!(
            "input pattern has {} entries for {} rows",
            opts.input.len(),
            dp.rows
        )));
    }
    if !(opts.wire_r.is_finite() && opts.wire_r >= 0.0) {
        return Err(NetlistError::Option(format!("wire_r must be >= 0, got {}", opts.wire_r)));
    }
    if !(opts.access_resistance.is_finite() && opts.access_resistance >= 0.0) {
        return Err(NetlistError::Option(format!(
            "access resistance must be >= 0, got {}",
            opts.access_resistance
        )));
    }
    if let Some(bad) = opts.input.iter().find(|v| !v.is_finite()) {
        return Err(NetlistError::Option(format!("non-finite input voltage {bad}")));
    }

    let g_min = opts.device.g_off() * (1.0 - RANGE_SLACK);
    let g_max = opts.device.g_on() * (1.0 + RANGE_SLACK);
    for polarity in Polarity::BOTH {
        let m = tile.get(polarity);
        for i in 0..dp.rows {
            for j in 0..dp.cols {
                let g = m.get(i, j);
                if !(g >= g_min && g <= g_max) {
                    return Err(NetlistError::OutOfRange {
                        i,
                        j,
                        polarity,
                        value: g,
                        min: opts.device.g_off(),
                        max: opts.device.g_on(),
                    });
                }
            }
        }
    }

    let key = dp.key();
    let mut n = Netlist::new(format!("crossbar {key}"));
    let a = &mut n.annotations;
    a.insert("design_key".into(), key);
    a.insert("rows".into(), dp.rows.to_string());
    a.insert("cols".into(), dp.cols.to_string());
    a.insert("device".into(), dp.device.to_string());
    a.insert("bitcell".into(), dp.bitcell.to_string());
    a.insert("partition".into(), dp.partition.to_string());
    a.insert("polarity".into(), "P N".into());
    a.insert("vdd".into(), opts.vdd.to_string());
    a.insert("vref".into(), (opts.vdd / 2.0).to_string());
    a.insert("wire_r".into(), opts.wire_r.to_string());
    a.insert("wire_c_ff".into(), opts.wire_c_ff.to_string());
    a.insert("access_r".into(), opts.access_resistance.to_string());
    if let Some((ti, tj)) = opts.tile_index {
        a.insert("tile".into(), format!("{ti} {tj}"));
    }

    let has_wires = opts.wire_r > 0.0;
    let (rows, cols) = (dp.rows, dp.cols);
    let row_block = rows / dp.partition.h_parts;
    let col_block = cols / dp.partition.v_parts;

    for polarity in Polarity::BOTH {
        let x = polarity.node_prefix();
        let t = polarity.tag();
        let g = tile.get(polarity);
        let col_node = |i: usize, j: usize| {
            if has_wires {
                format!("{x}_col{j}_h{}", i / row_block)
            } else {
                GROUND.to_string()
            }
        };
        let tap = |i: usize, j: usize| {
            let k = if has_wires { j } else { j / col_block * col_block };
            format!("{x}_row{i}_s{k}")
        };

        for i in 0..rows {
            let wl = format!("{x}_wl{i}");
            for j in 0..cols {
                let cell = format!("{x}_r{i}_c{j}");
                n.elements.push(Element::resistor(
                    format!("RM{t}_{i}_{j}"),
                    cell.clone(),
                    col_node(i, j),
                    1.0 / g.get(i, j),
                ));
                n.elements.push(Element::switch(
                    format!("RA{t}_{i}_{j}"),
                    wl.clone(),
                    tap(i, j),
                    cell.clone(),
                    opts.access_resistance,
                ));
                if dp.bitcell.switches_per_cell() == 2 {
                    n.elements.push(Element::switch(
                        format!("RB{t}_{i}_{j}"),
                        wl.clone(),
                        tap(i, j),
                        cell,
                        opts.access_resistance,
                    ));
                }
            }
        }
        if has_wires {
            for i in 0..rows {
                for k in (1..cols).filter(|k| k % col_block != 0) {
                    n.elements.push(Element::resistor(
                        format!("RW{t}_{i}_{k}"),
                        format!("{x}_row{i}_s{}", k - 1),
                        format!("{x}_row{i}_s{k}"),
                        opts.wire_r,
                    ));
                }
            }
            for j in 0..cols {
                for m in 0..dp.partition.h_parts {
                    n.elements.push(Element::resistor(
                        format!("RC{t}_{j}_{m}"),
                        format!("{x}_col{j}_h{m}"),
                        GROUND,
                        opts.wire_r * row_block as f64,
                    ));
                }
            }
        }
        for (i, &v) in opts.input.iter().enumerate() {
            for q in 0..dp.partition.v_parts {
                n.elements.push(Element::vsource(
                    format!("V{t}_{i}_{q}"),
                    format!("{x}_row{i}_s{}", q * col_block),
                    GROUND,
                    v,
                ));
            }
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::{BitcellName, DeviceName, Mode, Partition};
    use crate::matrix::Matrix;
    use crate::netlist::ElementKind;

    fn device() -> DeviceKind {
        DeviceKind {
            name: DeviceName::Rram,
            r_on: 1e4,
            r_off: 1e6,
        }
    }

    fn opts(rows: usize, wire_r: f64) -> GenerateOptions {
        GenerateOptions {
            wire_r,
            vdd: 1.0,
            input: vec![0.5; rows],
            device: device(),
            access_resistance: 500.0,
            wire_c_ff: 0.0,
            tile_index: None,
        }
    }

    fn tally(n: &Netlist) -> ElementCount {
        let mut c = ElementCount::default();
        for e in &n.elements {
            let slot = match (e.kind, &e.name[..2]) {
                (ElementKind::VSource, _) => &mut c.sources,
                (ElementKind::Switch, _) => &mut c.switches,
                (_, "RM") => &mut c.memory,
                (_, "RW") => &mut c.row_wires,
                (_, "RC") => &mut c.column_leads,
                _ => panic!("unexpected element {}", e.name),
            };
            *slot += 1;
        }
        c
    }

    #[test]
    fn counts_match_formula_with_partitions() {
        for bitcell in BitcellName::ALL {
            for (h, v) in [(1, 1), (2, 1), (1, 4), (2, 2)] {
                for wire_r in [0.0, 2.0] {
                    let mut dp = DesignPoint::new(7, DeviceName::Rram, bitcell, 8, Mode::Analog);
                    dp.partition = Partition { h_parts: h, v_parts: v };
                    let tile = ConductanceTile::uniform(8, 8, 1e-5);
                    let n = generate_crossbar_netlist(&dp, &tile, &opts(8, wire_r)).unwrap();
                    assert_eq!(tally(&n), element_count(&dp, wire_r > 0.0));
                }
            }
        }
    }

    #[test]
    fn rejects_out_of_range_cell() {
        let dp = DesignPoint::new(7, DeviceName::Rram, BitcellName::OneT1R, 2, Mode::Analog);
        let mut g = Matrix::filled(2, 2, 1e-5);
        g.set(1, 0, 1e-2);
        let tile = ConductanceTile::new(Matrix::filled(2, 2, 1e-5), g).unwrap();
        let err = generate_crossbar_netlist(&dp, &tile, &opts(2, 0.0)).unwrap_err();
        assert!(matches!(
            err,
            NetlistError::OutOfRange { i: 1, j: 0, polarity: Polarity::Neg, .. }
        ));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let dp = DesignPoint::new(7, DeviceName::Rram, BitcellName::OneT1R, 2, Mode::Analog);
        let tile = ConductanceTile::uniform(2, 3, 1e-5);
        assert!(matches!(
            generate_crossbar_netlist(&dp, &tile, &opts(2, 0.0)),
            Err(NetlistError::Shape(_))
        ));
        let tile = ConductanceTile::uniform(2, 2, 1e-5);
        assert!(matches!(
            generate_crossbar_netlist(&dp, &tile, &opts(3, 0.0)),
            Err(NetlistError::Shape(_))
        ));
    }

    #[test]
    fn every_node_touches_two_terminals() {
        let dp = DesignPoint::new(7, DeviceName::Rram, BitcellName::TwoT1R, 4, Mode::Analog);
        let tile = ConductanceTile::uniform(4, 4, 1e-5);
        for wire_r in [0.0, 1.0] {
            let n = generate_crossbar_netlist(&dp, &tile, &opts(4, wire_r)).unwrap();
            let mut degree = std::collections::HashMap::new();
            for e in &n.elements {
                let (a, b) = e.terminals();
                *degree.entry(a).or_insert(0) += 1;
                *degree.entry(b).or_insert(0) += 1;
            }
            assert!(degree.iter().all(|(_, d)| *d >= 2), "{degree:?}");
        }
    }
}
