//! Static T-intersection geometry.
//!
//! The through road runs along the x axis. The ego drives east in the
//! southern lane (`y = -w/2`); the oncoming lane sits at `y = +w/2`. The stem
//! road joins from the north, and the obstacle approaches it southbound in
//! the lane at `x = -w/2`, stopping with its front bumper on the stop line.
//! A left turn ends eastbound in the ego's lane. A right turn ends westbound
//! in the oncoming lane and never touches the ego's lane.

pub mod geometry;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub use geometry::{ConvexPolygon, OrientedBox, PolygonError, Vec2};

use crate::behavior::Intent;
use crate::dynamics::VehiclePose;
use geometry::{arc_points, line_points, point_segment_distance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("world dimension `{0}` must be positive and finite")]
    NonPositive(&'static str),
    #[error("turn radius {radius} does not fit the road layout")]
    TurnRadius { radius: f64 },
    #[error("occluder {0} overlaps a lane driving surface")]
    OccluderOnRoad(usize),
    #[error("unknown lane id {0}")]
    UnknownLane(usize),
}

/// Rectangular vehicle outline relative to the rear axle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
    /// Distance from the rear bumper to the rear axle.
    pub rear_axle_offset: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.8,
            rear_axle_offset: 1.0,
        }
    }
}

impl Footprint {
    pub fn is_valid(&self) -> bool {
        self.width > 0.0
            && self.length > self.width
            && self.rear_axle_offset >= 0.0
            && self.rear_axle_offset < self.length
            && self.length.is_finite()
    }

    /// Rear axle to front bumper.
    pub fn front_overhang(&self) -> f64 {
        self.length - self.rear_axle_offset
    }

    pub fn body(&self, pose: &VehiclePose) -> OrientedBox {
        let axis = Vec2::from_angle(pose.theta);
        let center_offset = 0.5 * self.length - self.rear_axle_offset;
        OrientedBox {
            center: pose.position() + axis * center_offset,
            axis,
            half_length: 0.5 * self.length,
            half_width: 0.5 * self.width,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LaneId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub id: LaneId,
    pub centerline: Vec<Vec2>,
    pub width: f64,
    /// Unit vector of the legal travel direction along the centerline.
    pub direction: Vec2,
}

impl Lane {
    fn distance_to_centerline(&self, p: Vec2) -> f64 {
        self.centerline
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed corridor test: on the boundary counts as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        self.distance_to_centerline(p) <= 0.5 * self.width
    }

    fn corridor_polygon(&self) -> ConvexPolygon {
        let a = self.centerline[0];
        let b = *self.centerline.last().unwrap();
        let n = (b - a).perp() * (0.5 * self.width / a.distance(b));
        ConvexPolygon::new(vec![a - n, b - n, b + n, a + n]).unwrap()
    }
}

/// A reference polyline with cumulative arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    waypoints: Vec<Vec2>,
    arc_length: Vec<f64>,
}

impl Path {
    pub fn new(waypoints: Vec<Vec2>) -> Self {
        let mut arc_length = Vec::with_capacity(waypoints.len());
        let mut s = 0.0;
        arc_length.push(0.0);
        for w in waypoints.windows(2) {
            s += w[0].distance(w[1]);
            arc_length.push(s);
        }
        Self { waypoints, arc_length }
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn arc_length(&self) -> &[f64] {
        &self.arc_length
    }

    pub fn total_length(&self) -> f64 {
        *self.arc_length.last().unwrap_or(&0.0)
    }

    /// Interpolated point at arc length `s`, clamped to the path.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let (i, frac) = self.locate(s);
        if i + 1 >= self.waypoints.len() {
            return self.waypoints[self.waypoints.len() - 1];
        }
        self.waypoints[i] + (self.waypoints[i + 1] - self.waypoints[i]) * frac
    }

    /// Unit tangent at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, _) = self.locate(s);
        let i = i.min(self.waypoints.len() - 2);
        let d = self.waypoints[i + 1] - self.waypoints[i];
        crate::math::atan2(d.y, d.x)
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total_length());
        let i = match self.arc_length.binary_search_by(|probe| probe.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if i + 1 >= self.arc_length.len() {
            return (self.arc_length.len() - 1, 0.0);
        }
        let seg = self.arc_length[i + 1] - self.arc_length[i];
        (i, (s - self.arc_length[i]) / seg)
    }

    /// Projection of `p` onto the path, searching a window around `hint`.
    ///
    /// Returns the segment index (usable as the next hint) and arc length.
    pub fn project(&self, p: Vec2, hint: usize) -> (usize, f64) {
        let last_seg = self.waypoints.len() - 2;
        let lo = hint.saturating_sub(8).min(last_seg);
        let hi = (hint + 40).min(last_seg);
        let (i, s) = self.project_range(p, lo, hi);
        // A best match on the window edge means the point is outside it.
        if (i == lo && lo > 0) || (i == hi && hi < last_seg) {
            return self.project_global(p);
        }
        (i, s)
    }

    /// Projection of `p` onto the whole path.
    pub fn project_global(&self, p: Vec2) -> (usize, f64) {
        self.project_range(p, 0, self.waypoints.len() - 2)
    }

    fn project_range(&self, p: Vec2, lo: usize, hi: usize) -> (usize, f64) {
        let mut best = (lo, 0.0, f64::INFINITY);
        for i in lo..=hi {
            let a = self.waypoints[i];
            let ab = self.waypoints[i + 1] - a;
            let len2 = ab.dot(ab);
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let d = p.distance(a + ab * t);
            if d < best.2 {
                best = (
                    i,
                    self.arc_length[i] + t * (self.arc_length[i + 1] - self.arc_length[i]),
                    d,
                );
            }
        }
        (best.0, best.1)
    }

    /// Arc length at which a point `overhang` ahead of the path (along its
    /// tangent) first reaches the line through `line`, approached from the
    /// side the path starts on.
    fn arc_where_ahead_reaches(&self, line: (Vec2, Vec2), overhang: f64) -> Option<f64> {
        let normal = (line.1 - line.0).perp();
        let start_side = (self.waypoints[0] - line.0).dot(normal).signum();
        let f = |s: f64| {
            let front = self.point_at(s) + Vec2::from_angle(self.heading_at(s)) * overhang;
            (front - line.0).dot(normal) * start_side
        };
        let n = self.waypoints.len();
        let mut lo = 0.0;
        if f(lo) <= 0.0 {
            return Some(0.0);
        }
        for i in 1..n {
            // just short of the waypoint, so the segment's own heading is used
            let hi = if i + 1 < n {
                self.arc_length[i] - 1e-12 * self.arc_length[i].max(1.0)
            } else {
                self.arc_length[i]
            };
            if f(hi) <= 0.0 {
                let mut a = lo;
                let mut b = hi;
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if f(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                return Some(b);
            }
            lo = self.arc_length[i];
            if f(lo) <= 0.0 {
                return Some(lo);
            }
        }
        None
    }
}

/// Stretch of the ego's lane that the obstacle's left turn sweeps through,
/// in along-lane coordinates measured from `origin` along `direction`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConflictZone {
    pub origin: Vec2,
    pub direction: Vec2,
    pub start: f64,
    pub end: f64,
}

impl ConflictZone {
    pub fn along(&self, p: Vec2) -> f64 {
        (p - self.origin).dot(self.direction)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub lane_width: f64,
    /// Through-road length west of the stem (ego approach side).
    pub ego_approach: f64,
    /// Through-road length east of the stem.
    pub ego_departure: f64,
    /// Stem road length north of the through road.
    pub stem_approach: f64,
    /// Stop line distance north of the through road's edge.
    pub stop_line_offset: f64,
    pub turn_radius: f64,
    pub waypoint_spacing: f64,
    /// Padding added on both ends of the conflict zone.
    pub conflict_margin: f64,
    pub occluders: Vec<ConvexPolygon>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            ego_approach: 120.0,
            ego_departure: 60.0,
            stem_approach: 40.0,
            stop_line_offset: 0.5,
            turn_radius: 6.0,
            waypoint_spacing: 0.5,
            conflict_margin: 2.0,
            occluders: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldMap {
    pub lanes: Vec<Lane>,
    pub stop_line: (Vec2, Vec2),
    pub occluders: Vec<ConvexPolygon>,
    paths: [Path; 3],
    conflict: ConflictZone,
}

impl WorldMap {
    pub const EGO_LANE: LaneId = LaneId(0);
    pub const ONCOMING_LANE: LaneId = LaneId(1);
    pub const STEM_APPROACH_LANE: LaneId = LaneId(2);
    pub const STEM_EXIT_LANE: LaneId = LaneId(3);

    pub fn lane(&self, id: LaneId) -> Result<&Lane, WorldError> {
        self.lanes.get(id.0).ok_or(WorldError::UnknownLane(id.0))
    }

    pub fn path(&self, intent: Intent) -> &Path {
        &self.paths[intent as usize]
    }

    pub fn conflict(&self) -> &ConflictZone {
        &self.conflict
    }

    /// Rear-axle arc length on an obstacle path at which the front bumper
    /// touches the stop line.
    pub fn stop_arc(&self, intent: Intent, footprint: &Footprint) -> f64 {
        self.path(intent)
            .arc_where_ahead_reaches(self.stop_line, footprint.front_overhang())
            .unwrap_or(0.0)
    }

    /// Whether the ego's (rear axle) x lies past the east end of the map.
    pub fn ego_has_exited(&self, ego: &VehiclePose) -> bool {
        let ego_path = self.path(Intent::Straight);
        let end = ego_path.waypoints()[ego_path.waypoints().len() - 1];
        (ego.position() - end).dot(self.lanes[0].direction) >= 0.0
    }
}

pub fn build_t_intersection(config: &WorldConfig) -> Result<WorldMap, WorldError> {
    let positive = [
        ("lane_width", config.lane_width),
        ("ego_approach", config.ego_approach),
        ("ego_departure", config.ego_departure),
        ("stem_approach", config.stem_approach),
        ("turn_radius", config.turn_radius),
        ("waypoint_spacing", config.waypoint_spacing),
    ];
    for (name, value) in positive {
        if !(value > 0.0 && value.is_finite()) {
            return Err(WorldError::NonPositive(name));
        }
    }
    for (name, value) in [
        ("stop_line_offset", config.stop_line_offset),
        ("conflict_margin", config.conflict_margin),
    ] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(WorldError::NonPositive(name));
        }
    }
    let spacing = config.waypoint_spacing.min(1.0);
    let w = config.lane_width;
    let r = config.turn_radius;
    let half = 0.5 * w;
    let stem_top = w + config.stem_approach;

    // Both arcs must start on the stem and end inside the through road.
    if half + r >= stem_top || r - half <= 0.0 || -half - r <= -config.ego_approach || r - half >= config.ego_departure
    {
        return Err(WorldError::TurnRadius { radius: r });
    }

    let east = Vec2::new(1.0, 0.0);
    let west = Vec2::new(-1.0, 0.0);
    let south = Vec2::new(0.0, -1.0);
    let north = Vec2::new(0.0, 1.0);
    let lanes = vec![
        Lane {
            id: WorldMap::EGO_LANE,
            centerline: vec![
                Vec2::new(-config.ego_approach, -half),
                Vec2::new(config.ego_departure, -half),
            ],
            width: w,
            direction: east,
        },
        Lane {
            id: WorldMap::ONCOMING_LANE,
            centerline: vec![
                Vec2::new(config.ego_departure, half),
                Vec2::new(-config.ego_approach, half),
            ],
            width: w,
            direction: west,
        },
        Lane {
            id: WorldMap::STEM_APPROACH_LANE,
            centerline: vec![Vec2::new(-half, stem_top), Vec2::new(-half, w)],
            width: w,
            direction: south,
        },
        Lane {
            id: WorldMap::STEM_EXIT_LANE,
            centerline: vec![Vec2::new(half, w), Vec2::new(half, stem_top)],
            width: w,
            direction: north,
        },
    ];

    for (i, occ) in config.occluders.iter().enumerate() {
        if lanes.iter().any(|l| l.corridor_polygon().overlaps_interior(occ)) {
            return Err(WorldError::OccluderOnRoad(i));
        }
    }

    let stop_y = w + config.stop_line_offset;
    let stop_line = (Vec2::new(-w, stop_y), Vec2::new(0.0, stop_y));

    let ego_path = {
        let a = Vec2::new(-config.ego_approach, -half);
        let b = Vec2::new(config.ego_departure, -half);
        let mut pts = vec![a];
        pts.extend(line_points(a, b, spacing));
        Path::new(pts)
    };

    let start = Vec2::new(-half, stem_top);
    let left_path = {
        let arc_start = Vec2::new(-half, r - half);
        let center = Vec2::new(-half + r, r - half);
        let merge = Vec2::new(-half + r, -half);
        let mut pts = vec![start];
        pts.extend(line_points(start, arc_start, spacing));
        pts.extend(arc_points(
            center,
            r,
            core::f64::consts::PI,
            core::f64::consts::FRAC_PI_2,
            spacing,
        ));
        pts.extend(line_points(merge, Vec2::new(config.ego_departure, -half), spacing));
        Path::new(pts)
    };
    let right_path = {
        let arc_start = Vec2::new(-half, half + r);
        let center = Vec2::new(-half - r, half + r);
        let merge = Vec2::new(-half - r, half);
        let mut pts = vec![start];
        pts.extend(line_points(start, arc_start, spacing));
        pts.extend(arc_points(center, r, 0.0, -core::f64::consts::FRAC_PI_2, spacing));
        pts.extend(line_points(merge, Vec2::new(-config.ego_approach, half), spacing));
        Path::new(pts)
    };

    let ego_lane = &lanes[0];
    let origin = Vec2::new(0.0, -half);
    let entry = left_path
        .waypoints()
        .iter()
        .find(|p| ego_lane.contains(**p))
        .copied()
        .unwrap_or(origin);
    let merge_x = -half + r;
    let conflict = ConflictZone {
        origin,
        direction: east,
        start: entry.x - config.conflict_margin,
        end: merge_x + config.conflict_margin,
    };

    Ok(WorldMap {
        lanes,
        stop_line,
        occluders: config.occluders.clone(),
        paths: [ego_path, left_path, right_path],
        conflict,
    })
}

/// Line of sight between two vehicle reference points.
pub fn isovist_contains(world: &WorldMap, observer: &VehiclePose, target: &VehiclePose) -> bool {
    let a = observer.position();
    let b = target.position();
    !world.occluders.iter().any(|o| o.intersects_open_segment(a, b))
}

pub fn footprints_collide(pose_a: &VehiclePose, fp_a: &Footprint, pose_b: &VehiclePose, fp_b: &Footprint) -> bool {
    fp_a.body(pose_a).overlaps(&fp_b.body(pose_b))
}

/// Gap between two footprints, zero when they overlap.
pub fn footprint_gap(pose_a: &VehiclePose, fp_a: &Footprint, pose_b: &VehiclePose, fp_b: &Footprint) -> f64 {
    fp_a.body(pose_a).distance(&fp_b.body(pose_b))
}

pub fn in_lane(world: &WorldMap, pose: &VehiclePose, fp: &Footprint, lane_id: LaneId) -> Result<bool, WorldError> {
    let lane = world.lane(lane_id)?;
    Ok(fp.body(pose).corners().iter().any(|c| lane.contains(*c)))
}
