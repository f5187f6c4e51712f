//! Reference rows of the published design-space table: twenty
//! (tech, device, bitcell) configurations at three crossbar sizes each.
//! The bit resolution of these rows was not published.

use crate::design_space::{BitcellName, DesignPoint, DeviceName, Mode};

use BitcellName::{OneT1R, TwoT1R};
use DeviceName::{Mram, Pcm, Rram};

/// (area µm², accuracy %, average power W) at sizes 16, 32, 64.
type Triple = (f64, f64, f64);

#[rustfmt::skip]
const TABLE: [(u32, DeviceName, BitcellName, [Triple; 3]); 20] = [
    (7, Mram, OneT1R, [(5286.615, 96.0, 3.937868), (3006.403, 96.0, 3.101278), (2156.134, 82.0, 1.847222)]),
    (7, Rram, OneT1R, [(5286.615, 78.0, 8.291856), (3006.403, 62.0, 5.490012), (2156.134, 18.0, 2.915078)]),
    (7, Rram, TwoT1R, [(5602.122, 80.0, 8.161842), (3329.135, 52.0, 5.458412), (2541.486, 14.0, 2.18464)]),
    (7, Pcm, OneT1R, [(5286.615, 92.0, 0.53445), (3006.403, 98.0, 0.521569), (2156.134, 100.0, 0.457961)]),
    (7, Pcm, TwoT1R, [(5602.122, 92.0, 0.533303), (3329.135, 98.0, 0.521374), (2541.486, 100.0, 0.778821)]),
    (9, Mram, OneT1R, [(5672.95, 94.0, 4.041462), (3401.585, 96.0, 3.250092), (3265.004, 72.0, 1.987902)]),
    (9, Rram, OneT1R, [(5672.95, 100.0, 8.618146), (3401.585, 68.0, 5.894228), (2627.994, 18.0, 3.171676)]),
    (9, Rram, TwoT1R, [(6194.502, 86.0, 7.372028), (3935.08, 62.0, 7.89253), (3265.004, 14.0, 3.153108)]),
    (9, Pcm, OneT1R, [(5672.95, 98.0, 0.535587), (3401.585, 98.0, 0.525815), (2627.994, 100.0, 0.469902)]),
    (9, Pcm, TwoT1R, [(6194.502, 82.0, 0.533361), (3935.08, 98.0, 0.525645), (3265.004, 100.0, 0.469741)]),
    (14, Mram, OneT1R, [(7061.34, 98.0, 4.087762), (4821.77, 96.0, 3.464416), (4323.738, 96.0, 2.228876)]),
    (14, Rram, OneT1R, [(7061.34, 86.0, 9.062472), (4821.77, 84.0, 6.528764), (4323.738, 24.0, 3.606136)]),
    (14, Rram, TwoT1R, [(8323.367, 84.0, 4.244777), (6112.698, 64.0, 6.498698), (5865.144, 18.0, 3.587574)]),
    (14, Pcm, OneT1R, [(7061.34, 90.0, 0.536243), (4821.77, 98.0, 0.531266), (4323.738, 100.0, 0.486095)]),
    (14, Pcm, TwoT1R, [(8323.367, 94.0, 0.542201), (6112.698, 98.0, 0.53113), (5865.144, 100.0, 0.485948)]),
    (20, Mram, OneT1R, [(9524.224, 98.0, 4.148678), (7341.056, 96.0, 3.596336), (7331.84, 96.0, 2.39336)]),
    (20, Rram, OneT1R, [(9524.224, 92.0, 3.304907), (7341.056, 88.0, 6.954812), (7331.84, 46.0, 3.924754)]),
    (20, Rram, TwoT1R, [(12099.79, 90.0, 2.468912), (9975.603, 70.0, 6.787644), (10477.57, 22.0, 3.906236)]),
    (20, Pcm, OneT1R, [(9524.224, 96.0, 0.537193), (7341.056, 98.0, 0.534285), (7331.84, 100.0, 0.495511)]),
    (20, Pcm, TwoT1R, [(12099.79, 98.0, 0.538646), (9975.603, 98.0, 0.534169), (10477.57, 100.0, 0.495376)]),
];

pub const SIZES: [usize; 3] = [16, 32, 64];

/// Number of images behind each published accuracy, inferred from the
/// accuracies all being multiples of 2%.
pub const PAPER_N_IMAGES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperRow {
    pub design: DesignPoint,
    pub area_um2: f64,
    pub accuracy_pct: f64,
    pub avg_power_w: f64,
}

/// All 60 rows in table order.
pub fn paper_rows() -> Vec<PaperRow> {
    TABLE
        .iter()
        .flat_map(|&(nm, device, bitcell, triples)| {
            SIZES.iter().zip(triples).map(move |(&size, (area, acc, power))| PaperRow {
                design: DesignPoint::new(nm, device, bitcell, size, Mode::DigitalUnspecified),
                area_um2: area,
                accuracy_pct: acc,
                avg_power_w: power,
            })
        })
        .collect()
}
