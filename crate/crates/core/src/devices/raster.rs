use std::ops::Range;

use log::warn;
use num_complex::Complex64;

use super::{DeviceError, DeviceSpec, Rect, CLADDING_EPS};
use crate::solver::{PermittivityMap, SimDomain};

const MIN_PML_CELLS: usize = 4;

/// Cells stamped for the extent `[lo, hi)` on a grid of step `dl`: the cell
/// count is the extent rounded to whole cells (at least one), centred on the
/// nearest cell boundary, clipped to `0..n`.
pub fn stamp_cells(lo: f64, hi: f64, dl: f64, n: usize) -> Range<usize> {
    let count = (((hi - lo) / dl).round() as usize).clamp(1, n);
    let start = (0.5 * (lo + hi) / dl - 0.5 * count as f64).round().max(0.0) as usize;
    let start = start.min(n - count);
    start..start + count
}

/// Rasterizes `spec` onto a fixed `rows × cols` grid whose steps follow the
/// device's physical extents.
pub fn rasterize(spec: &DeviceSpec, rows: usize, cols: usize) -> Result<(SimDomain, PermittivityMap), DeviceError> {
    let (l_x, l_z) = (spec.extent_x(), spec.extent_z());
    let (dl_x, dl_z) = (l_x / rows as f64, l_z / cols as f64);
    let pml_cells = |dl: f64| ((spec.pml_width / dl).round() as usize).max(MIN_PML_CELLS);
    let domain = SimDomain::new(rows, cols, l_x, l_z, pml_cells(dl_x), pml_cells(dl_z))?;
    let mut eps = vec![Complex64::new(CLADDING_EPS, 0.0); rows * cols];
    let mut stamp = |rect: &Rect, value: f64, what: &str| {
        let (x, z) = (rect.x_range(), rect.z_range());
        if rect.width < dl_x || rect.length < dl_z {
            warn!("{what} of {:.3e}×{:.3e} m is below one grid cell", rect.width, rect.length);
        }
        for r in stamp_cells(x.0, x.1, dl_x, rows) {
            for c in stamp_cells(z.0, z.1, dl_z, cols) {
                eps[r * cols + c] = Complex64::new(value, 0.0);
            }
        }
    };
    let body = spec.body();
    stamp(&body, spec.body_eps, "body");
    let (z0, z1) = body.z_range();
    for &center_x in &spec.port_centers {
        let input = Rect { center_x, center_z: z0 / 2.0, width: spec.port_width, length: z0 };
        let output = Rect { center_x, center_z: 0.5 * (z1 + l_z), width: spec.port_width, length: l_z - z1 };
        stamp(&input, spec.body_eps, "input port");
        stamp(&output, spec.body_eps, "output port");
    }
    for pad in &spec.pads {
        stamp(&pad.rect, pad.eps_r, "pad");
    }
    for cav in &spec.cavities {
        stamp(&cav.rect, cav.eps_r, "cavity");
    }
    let map = PermittivityMap::new(domain, eps)?;
    Ok((domain, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{sample_device_with, DeviceKind, GeometryRanges, SILICON_EPS};

    #[test]
    fn steps_follow_extents() {
        let d = SimDomain::new(64, 256, 5.5e-6, 20e-6, 4, 4).unwrap();
        assert!((d.dl_x - 85.9375e-9).abs() < 1e-15 && (d.dl_z - 78.125e-9).abs() < 1e-15);
        let spec = sample_device_with(&GeometryRanges::reference(), DeviceKind::TunableMmi, 3, 5).unwrap();
        let (dom, _) = rasterize(&spec, 64, 256).unwrap();
        assert!((dom.dl_x - spec.extent_x() / 64.0).abs() < 1e-18);
        assert!((dom.dl_z - spec.extent_z() / 256.0).abs() < 1e-18);
    }

    #[test]
    fn no_pads_gives_uniform_body() {
        let mut spec = sample_device_with(&GeometryRanges::desk(), DeviceKind::TunableMmi, 3, 1).unwrap();
        spec.pads.clear();
        let (d, eps) = rasterize(&spec, 32, 64).unwrap();
        let b = spec.body();
        let rows = stamp_cells(b.x_range().0, b.x_range().1, d.dl_x, d.rows);
        let cols = stamp_cells(b.z_range().0, b.z_range().1, d.dl_z, d.cols);
        for r in rows {
            for c in cols.clone() {
                assert_eq!(eps.at(r, c).re, SILICON_EPS);
            }
        }
    }

    fn pad_area_ratios(ranges: &GeometryRanges, rows: usize, cols: usize, seeds: u64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for seed in 0..seeds {
            let spec = sample_device_with(ranges, DeviceKind::TunableMmi, 3, seed).unwrap();
            let (d, eps) = rasterize(&spec, rows, cols).unwrap();
            for pad in &spec.pads {
                // cell-count oracle: pad permittivities are distinct from every other material
                let count = eps.eps.iter().filter(|e| e.re == pad.eps_r).count();
                let ratio = count as f64 * d.dl_x * d.dl_z / pad.rect.area();
                let (nx, nz) = (pad.rect.width / d.dl_x, pad.rect.length / d.dl_z);
                let half_cell = (1.0 + 0.5 / nx) * (1.0 + 0.5 / nz) - 1.0;
                out.push((ratio, half_cell));
            }
        }
        out
    }

    #[test]
    fn pad_area_matches_analytic() {
        for (ratio, _) in pad_area_ratios(&GeometryRanges::reference(), 64, 256, 50) {
            assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn small_grid_pad_area_within_half_cell() {
        let ratios = pad_area_ratios(&GeometryRanges::desk(), 32, 64, 50);
        for (ratio, bound) in &ratios {
            assert!((ratio - 1.0).abs() <= bound + 1e-9, "ratio {ratio} bound {bound}");
        }
        let mean = ratios.iter().map(|r| r.0).sum::<f64>() / ratios.len() as f64;
        assert!((0.9..=1.1).contains(&mean), "mean ratio {mean}");
    }

    #[test]
    fn stamp_keeps_subcell_features() {
        assert_eq!(stamp_cells(0.31, 0.32, 0.1, 10), 3..4);
        assert_eq!(stamp_cells(0.0, 1.0, 0.1, 10), 0..10);
    }

    #[test]
    fn rasterize_is_bitwise_deterministic() {
        let spec = sample_device_with(&GeometryRanges::desk(), DeviceKind::EtchedMmi, 3, 8).unwrap();
        assert_eq!(rasterize(&spec, 32, 64).unwrap().1, rasterize(&spec, 32, 64).unwrap().1);
    }
}

