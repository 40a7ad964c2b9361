//! CPU traversal of the block pyramid into a front-to-back render schedule.

use crate::cache::{BlockCache, CacheKey};
use crate::camera::Camera;
use crate::geometry::Aabb;
use crate::volume::{BlockKey, VolumeMeta};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OctreeNode {
    pub key: BlockKey,
    pub aabb: Aabb,
    /// Bit `i` set if child octant `i` exists (bit 0 = +x, 1 = +y, 2 = +z).
    pub child_mask: u8,
}

impl OctreeNode {
    pub fn is_leaf(&self) -> bool {
        self.key.level == 0
    }
}

/// The implicit octree over a container's pyramid.
#[derive(Clone, Debug)]
pub struct Octree {
    meta: VolumeMeta,
}

impl Octree {
    pub fn new(meta: VolumeMeta) -> Self {
        Octree { meta }
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn node(&self, key: BlockKey) -> OctreeNode {
        let mut child_mask = 0u8;
        if key.level > 0 {
            for octant in 0..8u8 {
                if self.meta.contains_key(&child_key(&key, octant)) {
                    child_mask |= 1 << octant;
                }
            }
        }
        OctreeNode {
            key,
            aabb: self.meta.block_aabb(&key),
            child_mask,
        }
    }

    pub fn root(&self) -> OctreeNode {
        self.node(BlockKey::new(self.meta.top_level(), [0, 0, 0]))
    }

    /// Existing children in front-to-back order for a viewer at `eye`.
    pub fn children_front_to_back(&self, node: &OctreeNode, eye: &nalgebra::Point3<f64>) -> Vec<OctreeNode> {
        let split = self.split_point(&node.key);
        let mut near_octant = 0u8;
        for a in 0..3 {
            if eye[a] >= split[a] {
                near_octant |= 1 << a;
            }
        }
        (0..8u8)
            .map(|n| near_octant ^ n)
            .filter(|&octant| node.child_mask & (1 << octant) != 0)
            .map(|octant| self.node(child_key(&node.key, octant)))
            .collect()
    }

    /// Where a node's children meet (the unclipped block center).
    fn split_point(&self, key: &BlockKey) -> [f64; 3] {
        let half = self.meta.block_size as u64 * (1u64 << (key.level - 1));
        std::array::from_fn(|a| ((2 * key.coords[a] as u64 + 1) * half) as f64 * self.meta.voxel_spacing[a])
    }
}

fn child_key(key: &BlockKey, octant: u8) -> BlockKey {
    let c = key.coords;
    BlockKey::new(
        key.level - 1,
        [
            2 * c[0] + (octant & 1) as u32,
            2 * c[1] + ((octant >> 1) & 1) as u32,
            2 * c[2] + ((octant >> 2) & 1) as u32,
        ],
    )
}

/// Whether the node's voxels are small enough, seen from the camera, that
/// descending further would not add visible detail.
///
/// Compares the voxel edge length over the distance to the closest point of
/// the node against `quality_k` pixel angles. Leaves are always sufficient;
/// a camera inside a non-leaf node always forces descent.
pub fn lod_sufficient(node: &OctreeNode, meta: &VolumeMeta, camera: &Camera, quality_k: f64) -> bool {
    if node.is_leaf() {
        return true;
    }
    let distance = node.aabb.distance_to(&camera.position);
    if distance <= 0.0 {
        return false;
    }
    let edge = meta.level_spacing(node.key.level).max();
    edge / distance <= quality_k * camera.pixel_angle()
}

/// Conservative visibility of a box against the camera frustum.
pub fn frustum_cull(aabb: &Aabb, camera: &Camera) -> bool {
    camera.box_visible(aabb)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduledBlock {
    pub key: CacheKey,
    pub aabb: Aabb,
}

/// Blocks to render this frame, front to back, plus the keys that were
/// wanted but not resident.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderSchedule {
    pub blocks: Vec<ScheduledBlock>,
    pub requests: Vec<CacheKey>,
}

impl RenderSchedule {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn keys(&self) -> Vec<CacheKey> {
        self.blocks.iter().map(|b| b.key).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraversalOptions {
    pub quality_k: f64,
    /// Ignore the level-of-detail test and always descend to level 0.
    pub force_finest: bool,
}

impl Default for TraversalOptions {
    fn default() -> Self {
        TraversalOptions {
            quality_k: 1.0,
            force_finest: false,
        }
    }
}

/// Builds the render schedule for one frame. Children missing from
/// `render_cache` are requested (through the cache's queue) and their parent
/// is scheduled instead.
pub fn traverse(tree: &Octree, camera: &Camera, render_cache: &BlockCache, opts: &TraversalOptions) -> RenderSchedule {
    let mut schedule = RenderSchedule::default();
    let root = tree.root();
    if !frustum_cull(&root.aabb, camera) {
        return schedule;
    }
    if render_cache.get(&root.key).is_none() {
        schedule.requests.push(root.key);
        return schedule;
    }
    visit(tree, &root, camera, render_cache, opts, &mut schedule);
    schedule
}

fn visit(
    tree: &Octree,
    node: &OctreeNode,
    camera: &Camera,
    cache: &BlockCache,
    opts: &TraversalOptions,
    out: &mut RenderSchedule,
) {
    let done = node.is_leaf() || (!opts.force_finest && lod_sufficient(node, tree.meta(), camera, opts.quality_k));
    if done {
        out.blocks.push(ScheduledBlock {
            key: node.key,
            aabb: node.aabb,
        });
        return;
    }
    let children: Vec<OctreeNode> = tree
        .children_front_to_back(node, &camera.position)
        .into_iter()
        .filter(|c| frustum_cull(&c.aabb, camera))
        .collect();
    let missing: Vec<CacheKey> = children
        .iter()
        .filter(|c| cache.get(&c.key).is_none())
        .map(|c| c.key)
        .collect();
    if !missing.is_empty() {
        out.requests.extend(missing);
        out.blocks.push(ScheduledBlock {
            key: node.key,
            aabb: node.aabb,
        });
        return;
    }
    for child in &children {
        visit(tree, child, camera, cache, opts, out);
    }
}
