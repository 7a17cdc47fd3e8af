use serde::{Deserialize, Serialize};

use super::{PointCloud, RigidTransform};
use crate::binio::{FormatError, Reader};

pub const VOXEL_MAGIC: &[u8; 4] = b"VXG1";

const SNAP: f64 = 1e-9;

/// Grid resolution and voxel edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub voxel_size: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dims: [40, 40, 40],
            voxel_size: 0.025,
        }
    }
}

impl GridSpec {
    pub fn new(dims: [usize; 3], voxel_size: f64) -> Self {
        Self { dims, voxel_size }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Edge length of the covered cube along each axis.
    pub fn extent(&self) -> [f64; 3] {
        self.dims.map(|d| d as f64 * self.voxel_size)
    }
}

/// Binary occupancy grid living in a (grasp) frame.
///
/// Voxel `(i, j, k)` has linear index `i + dx * (j + dy * k)` (x fastest). The
/// frame origin sits at the lower corner of voxel `dims / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    spec: GridSpec,
    frame: RigidTransform,
    words: Vec<u64>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec, frame: RigidTransform) -> Self {
        Self {
            spec,
            frame,
            words: vec![0; spec.len().div_ceil(64)],
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.spec.voxel_size
    }

    pub fn frame(&self) -> &RigidTransform {
        &self.frame
    }

    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [dx, dy, _] = self.spec.dims;
        i + dx * (j + dy * k)
    }

    #[inline]
    pub fn get_linear(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    #[inline]
    pub fn set_linear(&mut self, idx: usize) {
        self.words[idx / 64] |= 1 << (idx % 64);
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.get_linear(self.linear_index(i, j, k))
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize) {
        let idx = self.linear_index(i, j, k);
        self.set_linear(idx);
    }

    pub fn count_occupied(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Linear indices of occupied voxels in increasing order.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }

    /// Same occupancy, dims and voxel size (ignores the frame).
    pub fn same_occupancy(&self, other: &VoxelGrid) -> bool {
        self.spec == other.spec && self.words == other.words
    }

    /// Dense `{0.0, 1.0}` values in linear-index order.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for idx in self.occupied() {
            out[idx] = 1.0;
        }
        out
    }

    /// Serializes as `VXG1`, dims (3 × u32), voxel size (f64), then the bit-packed
    /// occupancy (LSB-first within each byte, x fastest). The frame is not stored.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(VOXEL_MAGIC);
        for d in self.spec.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.spec.voxel_size.to_le_bytes());
        let n_bytes = self.len().div_ceil(8);
        for b in 0..n_bytes {
            let word = self.words[b / 8];
            out.push((word >> ((b % 8) * 8)) as u8);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.len().div_ceil(8));
        self.write_to(&mut out);
        out
    }

    /// Parses a `VXG1` record; the returned grid has an identity frame.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        let grid = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(grid)
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, FormatError> {
        r.expect_magic(VOXEL_MAGIC)?;
        let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let voxel_size = r.f64()?;
        if dims.contains(&0) || !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(FormatError(format!(
                "invalid grid header: dims {dims:?}, voxel size {voxel_size}"
            )));
        }
        let spec = GridSpec::new(dims, voxel_size);
        let mut grid = VoxelGrid::empty(spec, RigidTransform::identity());
        let packed = r.take(spec.len().div_ceil(8))?;
        for (b, &byte) in packed.iter().enumerate() {
            grid.words[b / 8] |= (byte as u64) << ((b % 8) * 8);
        }
        if spec.len() % 64 != 0 {
            let last = grid.words.len() - 1;
            grid.words[last] &= (1u64 << (spec.len() % 64)) - 1;
        }
        Ok(grid)
    }
}

/// Occupancy grid of `cloud` expressed in `frame`.
///
/// Each point maps to `q = Rᵀ(p − t)` and index `floor(q / voxel_size) + dims / 2`;
/// points falling outside the grid are discarded. Coordinates within 1e-9 voxel
/// of a cell boundary snap onto it, so round-off from composing frames cannot
/// move a point that sits exactly on a boundary (such as the grasp point).
pub fn voxelize(cloud: &PointCloud, frame: &RigidTransform, spec: GridSpec) -> VoxelGrid {
    let mut grid = VoxelGrid::empty(spec, *frame);
    let half = spec.dims.map(|d| (d / 2) as i64);
    let inv = 1.0 / spec.voxel_size;
    for p in &cloud.points {
        let q = frame.inverse_apply(p);
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let s = q[a] * inv;
            let r = s.round();
            let c = if (s - r).abs() < SNAP { r } else { s.floor() };
            // Guard the cast against huge coordinates.
            if !(c.abs() < 1e12) {
                inside = false;
                break;
            }
            let i = c as i64 + half[a];
            if i < 0 || i >= spec.dims[a] as i64 {
                inside = false;
                break;
            }
            idx[a] = i as usize;
        }
        if inside {
            grid.set(idx[0], idx[1], idx[2]);
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CloudRole, Vec3};

    #[test]
    fn grasp_point_lands_in_center_voxel() {
        let frame = RigidTransform::rot_x(0.4).with_translation(Vec3::new(0.3, -0.2, 0.9));
        let cloud = PointCloud::new(vec![*frame.translation()], CloudRole::Structure);
        let grid = voxelize(&cloud, &frame, GridSpec::default());
        assert_eq!(grid.count_occupied(), 1);
        assert!(grid.get(20, 20, 20));
    }

    #[test]
    fn empty_cloud_gives_empty_grid() {
        let grid = voxelize(
            &PointCloud::empty(CloudRole::Structure),
            &RigidTransform::identity(),
            GridSpec::default(),
        );
        assert_eq!(grid.count_occupied(), 0);
        assert_eq!(grid.len(), 64_000);
    }

    #[test]
    fn default_extent_is_one_meter() {
        let e = GridSpec::default().extent();
        for v in e {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_points_are_discarded() {
        let cloud = PointCloud::new(
            vec![Vec3::new(0.6, 0.0, 0.0), Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.49, 0.0, 0.0)],
            CloudRole::Structure,
        );
        let grid = voxelize(&cloud, &RigidTransform::identity(), GridSpec::default());
        assert_eq!(grid.count_occupied(), 2);
        assert!(grid.get(0, 0, 0));
        assert!(grid.get(39, 20, 20));
    }

    #[test]
    fn duplicated_points_do_not_change_grid() {
        let pts = vec![Vec3::new(0.1, 0.2, -0.3), Vec3::new(0.0, 0.0, 0.01)];
        let mut dup = pts.clone();
        dup.extend(pts.iter().copied());
        let a = voxelize(&PointCloud::new(pts, CloudRole::Scene), &RigidTransform::identity(), GridSpec::default());
        let b = voxelize(&PointCloud::new(dup, CloudRole::Scene), &RigidTransform::identity(), GridSpec::default());
        assert!(a.same_occupancy(&b));
    }

    #[test]
    fn vxg1_round_trip_and_layout() {
        let spec = GridSpec::new([3, 2, 2], 0.5);
        let mut g = VoxelGrid::empty(spec, RigidTransform::identity());
        g.set(0, 0, 0);
        g.set(2, 1, 1);
        let bytes = g.to_bytes();
        assert_eq!(&bytes[..4], b"VXG1");
        assert_eq!(bytes.len(), 4 + 12 + 8 + 2);
        // voxel 0 -> bit 0 of byte 0; voxel 11 -> bit 3 of byte 1
        assert_eq!(bytes[24], 0b0000_0001);
        assert_eq!(bytes[25], 0b0000_1000);
        let back = VoxelGrid::from_bytes(&bytes).unwrap();
        assert!(back.same_occupancy(&g));
        assert!(VoxelGrid::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn occupied_iterates_in_order() {
        let mut g = VoxelGrid::empty(GridSpec::default(), RigidTransform::identity());
        for idx in [5usize, 64, 63, 63_999] {
            g.set_linear(idx);
        }
        assert_eq!(g.occupied().collect::<Vec<_>>(), vec![5, 63, 64, 63_999]);
    }
}
