//! Room layout, random user placement and the optical channel
//! (line-of-sight plus first wall reflection).

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::PhysParams;

/// Static description of the room and the population to place in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Room extent (x, y, z) in meters; APs hang at z.
    pub room: [f64; 3],
    pub user_height: f64,
    pub ap_rows: usize,
    pub ap_cols: usize,
    pub ap_spacing: f64,
    pub n_iu: usize,
    pub n_ehu: usize,
    pub wall_patch_edge: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            room: [8.0, 8.0, 3.0],
            user_height: 0.85,
            ap_rows: 4,
            ap_cols: 4,
            ap_spacing: 2.0,
            n_iu: 5,
            n_ehu: 5,
            wall_patch_edge: 0.25,
        }
    }
}

impl Layout {
    pub fn n_ap(&self) -> usize {
        self.ap_rows * self.ap_cols
    }
}

/// A reflecting wall element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPatch {
    pub center: Point3<f64>,
    /// Unit normal pointing into the room.
    pub normal: Vector3<f64>,
    pub area: f64,
    /// Horizontal and vertical edge lengths.
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub room: [f64; 3],
    pub ap_positions: Vec<Point3<f64>>,
    pub iu_positions: Vec<Point3<f64>>,
    pub ehu_positions: Vec<Point3<f64>>,
    pub wall_patches: Vec<WallPatch>,
}

impl Geometry {
    pub fn n_ap(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_iu(&self) -> usize {
        self.iu_positions.len()
    }

    pub fn n_ehu(&self) -> usize {
        self.ehu_positions.len()
    }
}

/// Places the AP lattice on the ceiling and draws users uniformly over the
/// floor area at user height. The draw order is IUs first, then EHUs, each
/// as an (x, y) pair, so two layouts with the same total user count see the
/// same positions.
pub fn build_geometry(layout: &Layout, seed: u64) -> Result<Geometry> {
    let [lx, ly, lz] = layout.room;
    if !(lx > 0.0 && ly > 0.0 && lz > 0.0) {
        return Err(Error::InvalidParams(format!("room dimensions must be positive: {:?}", layout.room)));
    }
    if !(layout.user_height >= 0.0 && layout.user_height < lz) {
        return Err(Error::InvalidParams(format!(
            "user height {} must lie below the ceiling at {lz}",
            layout.user_height
        )));
    }
    if layout.n_iu + layout.n_ehu == 0 {
        return Err(Error::NoUsers);
    }
    let n_ap = layout.n_ap();
    if layout.n_iu >= n_ap {
        return Err(Error::TooManyInformationUsers { n_iu: layout.n_iu, n_ap });
    }
    let span_x = (layout.ap_cols.max(1) - 1) as f64 * layout.ap_spacing;
    let span_y = (layout.ap_rows.max(1) - 1) as f64 * layout.ap_spacing;
    if n_ap == 0 || layout.ap_spacing < 0.0 || span_x > lx || span_y > ly {
        return Err(Error::GridDoesNotFit {
            rows: layout.ap_rows,
            cols: layout.ap_cols,
            spacing: layout.ap_spacing,
        });
    }
    if !(layout.wall_patch_edge > 0.0) {
        return Err(Error::InvalidParams("wall_patch_edge must be positive".into()));
    }

    let x0 = 0.5 * (lx - span_x);
    let y0 = 0.5 * (ly - span_y);
    let ap_positions = (0..layout.ap_rows)
        .flat_map(|r| {
            (0..layout.ap_cols).map(move |c| {
                Point3::new(x0 + c as f64 * layout.ap_spacing, y0 + r as f64 * layout.ap_spacing, lz)
            })
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |count: usize| -> Vec<Point3<f64>> {
        (0..count)
            .map(|_| {
                let u: f64 = rng.sample(rand::distr::Open01);
                let v: f64 = rng.sample(rand::distr::Open01);
                Point3::new(u * lx, v * ly, layout.user_height)
            })
            .collect()
    };
    let iu_positions = draw(layout.n_iu);
    let ehu_positions = draw(layout.n_ehu);

    Ok(Geometry {
        room: layout.room,
        ap_positions,
        iu_positions,
        ehu_positions,
        wall_patches: wall_patches(layout.room, layout.wall_patch_edge),
    })
}

/// Splits the four vertical walls into (near-)square patches of the given edge.
pub fn wall_patches(room: [f64; 3], edge: f64) -> Vec<WallPatch> {
    let [lx, ly, lz] = room;
    let nz = (lz / edge).round().max(1.0) as usize;
    let dz = lz / nz as f64;
    let mut patches = Vec::new();
    // (fixed coordinate axis, position on that axis, inward normal, length of the wall)
    let walls: [(usize, f64, Vector3<f64>, f64); 4] = [
        (0, 0.0, Vector3::x(), ly),
        (0, lx, -Vector3::x(), ly),
        (1, 0.0, Vector3::y(), lx),
        (1, ly, -Vector3::y(), lx),
    ];
    for (axis, pos, normal, len) in walls {
        let ns = (len / edge).round().max(1.0) as usize;
        let ds = len / ns as f64;
        for s in 0..ns {
            let along = (s as f64 + 0.5) * ds;
            for k in 0..nz {
                let z = (k as f64 + 0.5) * dz;
                let center = if axis == 0 {
                    Point3::new(pos, along, z)
                } else {
                    Point3::new(along, pos, z)
                };
                patches.push(WallPatch { center, normal, area: ds * dz, width: ds, height: dz });
            }
        }
    }
    patches
}

/// Line-of-sight DC gain between a downward-facing LED and an upward-facing
/// receiver of area `pd_area`. Zero outside the receiver's field of view.
pub fn los_gain(ap: &Point3<f64>, user: &Point3<f64>, pd_area: f64, params: &PhysParams) -> f64 {
    let delta = ap - user;
    let d2 = delta.norm_squared();
    if d2 == 0.0 || delta.z <= 0.0 {
        return 0.0;
    }
    let cos_angle = delta.z / d2.sqrt();
    let fov_gain = params.concentrator_gain(cos_angle.acos());
    if fov_gain == 0.0 {
        return 0.0;
    }
    let m = params.lambertian_order();
    (m + 1.0) * pd_area / (2.0 * std::f64::consts::PI * d2)
        * cos_angle.powf(m)
        * params.optical_filter_gain
        * fov_gain
        * cos_angle
}

/// Largest patch edge, relative to its distance from the AP or the user,
/// that is integrated with a single center sample.
const PATCH_RESOLUTION: f64 = 0.25;
const MAX_PATCH_SPLITS: u32 = 16;
/// Columns used on a patch cut by the receiver's FoV edge.
const EDGE_COLUMNS: usize = 4;

/// First-reflection DC gain summed over the wall patches.
///
/// A patch contributes its center-point term unless it is large compared
/// with its distance to the AP or user (then it is split into quarters), or
/// the receiver's FoV edge crosses it. In the latter case each of a few
/// vertical columns keeps only the part above the edge, which on a wall is
/// `z >= z_user + r_h / tan(FoV)` with `r_h` the horizontal distance.
pub fn nlos_gain(
    ap: &Point3<f64>,
    user: &Point3<f64>,
    patches: &[WallPatch],
    pd_area: f64,
    params: &PhysParams,
) -> f64 {
    if params.wall_reflectance == 0.0 {
        return 0.0;
    }
    let m = params.lambertian_order();
    let prefactor = (m + 1.0) * pd_area / (2.0 * std::f64::consts::PI)
        * params.wall_reflectance
        * params.optical_filter_gain;
    let density = |point: &Point3<f64>, normal: &Vector3<f64>| -> f64 {
        let to_patch = point - ap;
        let to_user = user - point;
        let d1 = to_patch.norm();
        let d2 = to_user.norm();
        if d1 == 0.0 || d2 == 0.0 {
            return 0.0;
        }
        // LED faces down, receiver faces up.
        let cos_irr = -to_patch.z / d1;
        let cos_wall_in = -normal.dot(&to_patch) / d1;
        let cos_wall_out = normal.dot(&to_user) / d2;
        let cos_inc = -to_user.z / d2;
        if cos_irr <= 0.0 || cos_wall_in <= 0.0 || cos_wall_out <= 0.0 || cos_inc <= 0.0 {
            return 0.0;
        }
        let fov_gain = params.concentrator_gain(cos_inc.min(1.0).acos());
        prefactor / (d1 * d1 * d2 * d2) * cos_irr.powf(m) * cos_wall_in * cos_wall_out * fov_gain * cos_inc
    };
    let quad = PatchQuadrature { density, ap, user, tan_fov: params.fov_semi_angle.to_radians().tan() };
    patches
        .iter()
        .map(|patch| {
            let along = patch.normal.cross(&Vector3::z());
            quad.integrate(patch.center, &patch.normal, &along, patch.width, patch.height, 0)
        })
        .sum()
}

struct PatchQuadrature<'a, F> {
    density: F,
    ap: &'a Point3<f64>,
    user: &'a Point3<f64>,
    tan_fov: f64,
}

impl<F: Fn(&Point3<f64>, &Vector3<f64>) -> f64> PatchQuadrature<'_, F> {
    fn integrate(
        &self,
        center: Point3<f64>,
        normal: &Vector3<f64>,
        along: &Vector3<f64>,
        width: f64,
        height: f64,
        depth: u32,
    ) -> f64 {
        let reach = (center - self.ap).norm().min((self.user - center).norm());
        if depth < MAX_PATCH_SPLITS && width.max(height) > PATCH_RESOLUTION * reach {
            let (qw, qh) = (0.25 * width, 0.25 * height);
            return [(-qw, -qh), (-qw, qh), (qw, -qh), (qw, qh)]
                .iter()
                .map(|&(a, z)| {
                    let c = center + along * a + Vector3::z() * z;
                    self.integrate(c, normal, along, 0.5 * width, 0.5 * height, depth + 1)
                })
                .sum();
        }

        let to_user = self.user - center;
        let depth_into_room = normal.dot(&to_user);
        let offset = along.dot(&to_user);
        // lowest visible height in the column at along-offset `s` from the center
        let edge = |s: f64| self.user.z + (depth_into_room.powi(2) + (offset - s).powi(2)).sqrt() / self.tan_fov;
        let (hw, hh) = (0.5 * width, 0.5 * height);
        let (z_lo, z_hi) = (center.z - hh, center.z + hh);
        let nearest = offset.clamp(-hw, hw);
        let farthest = if offset > 0.0 { -hw } else { hw };
        if edge(nearest) >= z_hi {
            return 0.0;
        }
        if edge(farthest) <= z_lo {
            return (self.density)(&center, normal) * width * height;
        }
        let col = width / EDGE_COLUMNS as f64;
        (0..EDGE_COLUMNS)
            .map(|c| {
                let s = -hw + (c as f64 + 0.5) * col;
                let lo = edge(s).max(z_lo);
                if lo >= z_hi {
                    return 0.0;
                }
                let p = Point3::new(center.x, center.y, 0.5 * (lo + z_hi)) + along * s;
                (self.density)(&p, normal) * col * (z_hi - lo)
            })
            .sum()
    }
}

/// Per-user, per-AP optical gains. Rows are the information users followed
/// by the energy-harvesting users.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub gains: DMatrix<f64>,
    pub n_iu: usize,
}

impl ChannelMatrix {
    pub fn new(gains: DMatrix<f64>, n_iu: usize) -> Result<Self> {
        if n_iu > gains.nrows() {
            return Err(Error::Dimension(format!(
                "{n_iu} information users but only {} channel rows",
                gains.nrows()
            )));
        }
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParams("channel gains must be finite and nonnegative".into()));
        }
        Ok(Self { gains, n_iu })
    }

    pub fn n_ap(&self) -> usize {
        self.gains.ncols()
    }

    pub fn n_iu(&self) -> usize {
        self.n_iu
    }

    pub fn n_ehu(&self) -> usize {
        self.gains.nrows() - self.n_iu
    }

    /// Sub-matrix of information-user rows.
    pub fn iu(&self) -> DMatrix<f64> {
        self.gains.rows(0, self.n_iu).into_owned()
    }

    /// Sub-matrix of energy-harvesting-user rows.
    pub fn ehu(&self) -> DMatrix<f64> {
        self.gains.rows(self.n_iu, self.n_ehu()).into_owned()
    }

    /// Channel vector of EHU `k` (over all APs).
    pub fn ehu_row(&self, k: usize) -> DVector<f64> {
        self.gains.row(self.n_iu + k).transpose()
    }
}

pub fn channel_matrix(geometry: &Geometry, params: &PhysParams) -> ChannelMatrix {
    let users = geometry
        .iu_positions
        .iter()
        .map(|u| (u, params.pd_area_iu))
        .chain(geometry.ehu_positions.iter().map(|u| (u, params.pd_area_ehu)));
    let n_users = geometry.n_iu() + geometry.n_ehu();
    let mut gains = DMatrix::zeros(n_users, geometry.n_ap());
    for (row, (user, area)) in users.enumerate() {
        for (col, ap) in geometry.ap_positions.iter().enumerate() {
            gains[(row, col)] = los_gain(ap, user, area, params)
                + nlos_gain(ap, user, &geometry.wall_patches, area, params);
        }
    }
    ChannelMatrix { gains, n_iu: geometry.n_iu() }
}
