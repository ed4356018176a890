//! Web Mercator tile indexing, tile bounds, and geo<->pixel mapping for
//! fixed-size (default 256x256) slippy-map tiles.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Latitude limit of the Web Mercator projection, degrees.
pub const MERCATOR_LAT_MAX: f64 = 85.05113;

/// Maximum supported zoom level. Beyond this the f64 pixel math drops
/// below the tested 1e-7 degree precision budget.
pub const MAX_ZOOM: u8 = 22;

/// Default tile edge length in pixels.
pub const DEFAULT_TILE_SIZE: u32 = 256;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeRange(f64),
    #[error("latitude {0} outside Web Mercator range (-{lim}, {lim})", lim = MERCATOR_LAT_MAX)]
    LatitudeRange(f64),
    #[error("zoom {0} exceeds maximum {MAX_ZOOM}")]
    ZoomRange(u8),
    #[error("invalid bounds: west {west} / east {east}, south {south} / north {north}")]
    InvalidBounds {
        west: f64,
        south: f64,
        east: f64,
        north: f64,
    },
}

/// A longitude/latitude pair in degrees, valid under Web Mercator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(GeoError::LongitudeRange(lon));
        }
        if lat.abs() >= MERCATOR_LAT_MAX || !lat.is_finite() {
            return Err(GeoError::LatitudeRange(lat));
        }
        Ok(GeoPoint { lon, lat })
    }

    /// Like [`GeoPoint::new`] but wraps the longitude into [-180, 180)
    /// first. Latitudes are still rejected outside the Mercator range.
    pub fn wrapped(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !lon.is_finite() {
            return Err(GeoError::LongitudeRange(lon));
        }
        let mut w = (lon + 180.0).rem_euclid(360.0) - 180.0;
        if w == 180.0 {
            w = -180.0;
        }
        GeoPoint::new(w, lat)
    }
}

/// A z/x/y slippy-map tile reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileRef {
    pub z: u8,
    pub x: u32,
    pub y: u32,
}

impl TileRef {
    pub fn new(z: u8, x: u32, y: u32) -> Result<Self, GeoError> {
        if z > MAX_ZOOM {
            return Err(GeoError::ZoomRange(z));
        }
        let n = 1u32 << z;
        if x >= n || y >= n {
            return Err(GeoError::InvalidBounds {
                west: x as f64,
                south: y as f64,
                east: n as f64,
                north: n as f64,
            });
        }
        Ok(TileRef { z, x, y })
    }
}

impl std::fmt::Display for TileRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.z, self.x, self.y)
    }
}

/// Geographic bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl GeoBounds {
    pub fn new(west: f64, south: f64, east: f64, north: f64) -> Result<Self, GeoError> {
        if west >= east || south >= north {
            return Err(GeoError::InvalidBounds {
                west,
                south,
                east,
                north,
            });
        }
        Ok(GeoBounds {
            west,
            south,
            east,
            north,
        })
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: (self.west + self.east) / 2.0,
            lat: (self.south + self.north) / 2.0,
        }
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lon >= self.west && p.lon <= self.east && p.lat >= self.south && p.lat <= self.north
    }
}

/// Fractional pixel coordinates within a tile. Row grows southward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub col: f64,
    pub row: f64,
    pub tile_size: u32,
}

// Mercator x/y normalized to [0, 1) across the world.
fn mercator_norm(p: &GeoPoint) -> (f64, f64) {
    let x = (p.lon + 180.0) / 360.0;
    let lat_rad = p.lat.to_radians();
    let y = (1.0 - lat_rad.tan().asinh() / PI) / 2.0;
    (x, y)
}

fn inverse_mercator(xn: f64, yn: f64) -> GeoPoint {
    let lon = xn * 360.0 - 180.0;
    let lat = (PI * (1.0 - 2.0 * yn)).sinh().atan().to_degrees();
    GeoPoint { lon, lat }
}

/// Index of the tile containing `p` at zoom `z`. Indices are clamped to
/// the valid range, so points on the east/south world edge land in the
/// last tile.
pub fn tile_index(p: &GeoPoint, z: u8) -> Result<TileRef, GeoError> {
    if z > MAX_ZOOM {
        return Err(GeoError::ZoomRange(z));
    }
    if p.lat.abs() >= MERCATOR_LAT_MAX {
        return Err(GeoError::LatitudeRange(p.lat));
    }
    let n = (1u64 << z) as f64;
    let (xn, yn) = mercator_norm(p);
    let max = (1u64 << z) - 1;
    let x = ((xn * n).floor() as i64).clamp(0, max as i64) as u32;
    let y = ((yn * n).floor() as i64).clamp(0, max as i64) as u32;
    Ok(TileRef { z, x, y })
}

/// Geographic bounds of tile `t` under the inverse Mercator projection.
pub fn tile_bounds(t: &TileRef) -> GeoBounds {
    let n = (1u64 << t.z) as f64;
    let nw = inverse_mercator(t.x as f64 / n, t.y as f64 / n);
    let se = inverse_mercator((t.x + 1) as f64 / n, (t.y + 1) as f64 / n);
    GeoBounds {
        west: nw.lon,
        south: se.lat,
        east: se.lon,
        north: nw.lat,
    }
}

/// Map `p` into the pixel frame of tile `t`. Points outside the tile
/// yield out-of-range coordinates; the rasterizer clips.
pub fn geo_to_pixel(p: &GeoPoint, t: &TileRef, tile_size: u32) -> Result<PixelCoord, GeoError> {
    if p.lat.abs() >= MERCATOR_LAT_MAX {
        return Err(GeoError::LatitudeRange(p.lat));
    }
    let n = (1u64 << t.z) as f64;
    let size = tile_size as f64;
    let (xn, yn) = mercator_norm(p);
    Ok(PixelCoord {
        col: (xn * n - t.x as f64) * size,
        row: (yn * n - t.y as f64) * size,
        tile_size,
    })
}

/// Inverse of [`geo_to_pixel`] up to floating-point tolerance.
pub fn pixel_to_geo(px: &PixelCoord, t: &TileRef) -> GeoPoint {
    let n = (1u64 << t.z) as f64;
    let size = px.tile_size as f64;
    let xn = (t.x as f64 + px.col / size) / n;
    let yn = (t.y as f64 + px.row / size) / n;
    inverse_mercator(xn, yn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn world_tile_indexing() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        assert_eq!(tile_index(&p, 0).unwrap(), TileRef { z: 0, x: 0, y: 0 });
        // Equator/prime-meridian sits at the NW corner of the SE quadrant.
        assert_eq!(tile_index(&p, 1).unwrap(), TileRef { z: 1, x: 1, y: 1 });
    }

    #[test]
    fn washington_tile_z18() {
        let p = GeoPoint::new(-77.0365, 38.8977).unwrap();
        let t = tile_index(&p, 18).unwrap();
        assert_eq!(
            t,
            TileRef {
                z: 18,
                x: 74975,
                y: 100281
            }
        );
        // Center of the bounds re-indexes to the same tile.
        let b = tile_bounds(&t);
        assert_eq!(tile_index(&b.center(), 18).unwrap(), t);
    }

    #[test]
    fn world_tile_bounds() {
        let b = tile_bounds(&TileRef { z: 0, x: 0, y: 0 });
        assert_abs_diff_eq!(b.west, -180.0);
        assert_abs_diff_eq!(b.east, 180.0);
        assert_abs_diff_eq!(b.north, 85.05113, epsilon = 1e-4);
        assert_abs_diff_eq!(b.south, -85.05113, epsilon = 1e-4);

        let q = tile_bounds(&TileRef { z: 1, x: 0, y: 0 });
        assert_abs_diff_eq!(q.west, -180.0);
        assert_abs_diff_eq!(q.east, 0.0);
        assert_abs_diff_eq!(q.south, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.north, 85.05113, epsilon = 1e-4);
    }

    #[test]
    fn pixel_corners_and_center() {
        let t = TileRef { z: 0, x: 0, y: 0 };
        let b = tile_bounds(&t);
        let nw = GeoPoint::new(b.west, b.north - 1e-9).unwrap();
        let px = geo_to_pixel(&nw, &t, 256).unwrap();
        assert_abs_diff_eq!(px.col, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(px.row, 0.0, epsilon = 1e-3);

        let center = GeoPoint::new(0.0, 0.0).unwrap();
        let px = geo_to_pixel(&center, &t, 256).unwrap();
        assert_abs_diff_eq!(px.col, 128.0, epsilon = 1e-6);
        assert_abs_diff_eq!(px.row, 128.0, epsilon = 1e-6);

        let g = pixel_to_geo(
            &PixelCoord {
                col: 128.0,
                row: 128.0,
                tile_size: 256,
            },
            &t,
        );
        assert_abs_diff_eq!(g.lon, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.lat, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn latitude_out_of_range_rejected() {
        let p = GeoPoint { lon: 0.0, lat: 89.0 };
        assert_eq!(tile_index(&p, 5), Err(GeoError::LatitudeRange(89.0)));
        assert!(GeoPoint::new(0.0, 86.0).is_err());
    }

    #[test]
    fn wrapped_longitude() {
        let p = GeoPoint::wrapped(190.0, 10.0).unwrap();
        assert_abs_diff_eq!(p.lon, -170.0);
        let p = GeoPoint::wrapped(-540.0, 10.0).unwrap();
        assert_abs_diff_eq!(p.lon, -180.0);
    }

    proptest! {
        #[test]
        fn containment_and_roundtrip(
            lon in -179.999f64..179.999,
            lat in -84.9f64..84.9,
            z in 0u8..=19,
        ) {
            let p = GeoPoint::new(lon, lat).unwrap();
            let t = tile_index(&p, z).unwrap();
            let b = tile_bounds(&t);
            prop_assert!(b.contains(&p));
            prop_assert_eq!(tile_index(&b.center(), z).unwrap(), t);
        }

        #[test]
        fn pixel_composition_identity(
            lon in -179.0f64..179.0,
            lat in -84.0f64..84.0,
            z in 0u8..=19,
        ) {
            let p = GeoPoint::new(lon, lat).unwrap();
            let t = tile_index(&p, z).unwrap();
            let px = geo_to_pixel(&p, &t, 256).unwrap();
            let q = pixel_to_geo(&px, &t);
            prop_assert!((q.lon - p.lon).abs() < 1e-6);
            prop_assert!((q.lat - p.lat).abs() < 1e-6);
        }
    }
}
