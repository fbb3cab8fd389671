//! Equirectangular tiling and field-of-view tile selection.
//!
//! The sphere is unrolled to a 360°×180° rectangle and cut into a
//! `u_h`×`u_v` grid. Yaw wraps around; pitch is clamped to `[0, 180]`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overlaps narrower than this (in degrees) count as touching, not intersecting.
const OVERLAP_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingConfig {
    pub u_h: u32,
    pub u_v: u32,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    #[serde(default)]
    pub margin_deg: f64,
}

impl TilingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("tiling: {msg}")));
        if self.u_h == 0 || self.u_v == 0 {
            return bad("grid dimensions must be at least 1");
        }
        if !(self.fov_h_deg > 0.0 && self.fov_h_deg <= 360.0) {
            return bad("fov_h_deg must lie in (0, 360]");
        }
        if !(self.fov_v_deg > 0.0 && self.fov_v_deg <= 180.0) {
            return bad("fov_v_deg must lie in (0, 180]");
        }
        if !(self.margin_deg >= 0.0 && self.margin_deg.is_finite()) {
            return bad("margin_deg must be non-negative");
        }
        Ok(())
    }

    /// Width of one tile column in degrees of yaw.
    pub fn col_width_deg(&self) -> f64 {
        360.0 / self.u_h as f64
    }

    pub fn row_height_deg(&self) -> f64 {
        180.0 / self.u_v as f64
    }

    pub fn tile_count(&self) -> usize {
        self.u_h as usize * self.u_v as usize
    }
}

/// 1-based `(column, row)` tile index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileId {
    pub col: u32,
    pub row: u32,
}

impl TileId {
    pub const fn new(col: u32, row: u32) -> Self {
        TileId { col, row }
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

/// Center of a field of view: yaw in `[0, 360)`, pitch in `[0, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDirection {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl ViewDirection {
    /// Builds a direction, wrapping yaw into `[0, 360)`.
    pub fn new(yaw_deg: f64, pitch_deg: f64) -> Result<Self> {
        if !yaw_deg.is_finite() || !(0.0..=180.0).contains(&pitch_deg) {
            return Err(Error::InvalidConfig(format!(
                "view direction ({yaw_deg}, {pitch_deg}) out of range"
            )));
        }
        Ok(ViewDirection { yaw_deg: wrap_yaw(yaw_deg), pitch_deg })
    }
}

pub fn wrap_yaw(yaw: f64) -> f64 {
    let w = yaw.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 { 0.0 } else { w }
}

/// Angular extent `[yaw_lo, yaw_hi] × [pitch_lo, pitch_hi]` covered by a tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub yaw: (f64, f64),
    pub pitch: (f64, f64),
}

pub fn tile_coverage(tile: TileId, cfg: &TilingConfig) -> Result<Coverage> {
    if tile.col < 1 || tile.col > cfg.u_h || tile.row < 1 || tile.row > cfg.u_v {
        return Err(Error::TileOutOfBounds { col: tile.col, row: tile.row, u_h: cfg.u_h, u_v: cfg.u_v });
    }
    let (w, h) = (cfg.col_width_deg(), cfg.row_height_deg());
    Ok(Coverage {
        yaw: ((tile.col - 1) as f64 * w, tile.col as f64 * w),
        pitch: ((tile.row - 1) as f64 * h, tile.row as f64 * h),
    })
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.max(b.0) + OVERLAP_EPS_DEG < a.1.min(b.1)
}

/// Tiles intersecting the margin-extended FoV centred on `dir`.
pub fn compute_tile_set(dir: &ViewDirection, cfg: &TilingConfig) -> BTreeSet<TileId> {
    let ext_h = cfg.fov_h_deg + 2.0 * cfg.margin_deg;
    let ext_v = cfg.fov_v_deg + 2.0 * cfg.margin_deg;

    let pitch = (
        (dir.pitch_deg - ext_v / 2.0).max(0.0),
        (dir.pitch_deg + ext_v / 2.0).min(180.0),
    );
    let rows: Vec<u32> = (1..=cfg.u_v)
        .filter(|&r| {
            let h = cfg.row_height_deg();
            ext_v >= 180.0 || overlaps(pitch, ((r - 1) as f64 * h, r as f64 * h))
        })
        .collect();

    let yaw_lo = dir.yaw_deg - ext_h / 2.0;
    let yaw_hi = dir.yaw_deg + ext_h / 2.0;
    let cols: Vec<u32> = (1..=cfg.u_h)
        .filter(|&c| {
            if ext_h >= 360.0 {
                return true;
            }
            let w = cfg.col_width_deg();
            let tile = ((c - 1) as f64 * w, c as f64 * w);
            // the FoV interval lies within (-360, 720); test the tile's three images
            [-360.0, 0.0, 360.0]
                .iter()
                .any(|&shift| overlaps((yaw_lo, yaw_hi), (tile.0 + shift, tile.1 + shift)))
        })
        .collect();

    cols.iter()
        .flat_map(|&c| rows.iter().map(move |&r| TileId::new(c, r)))
        .collect()
}
