//! Procedural multi-room gridworld.
//!
//! Worlds are built by binary space partitioning of the interior into
//! rectangular rooms. Every dividing wall gets one door cell, so the floor
//! forms a tree of rooms and is always connected. Objects sit on floor cells
//! inside rooms and do not block movement.

use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current version of the world JSON document.
pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Floor,
    Wall,
}

/// Grid coordinates; `y` grows southwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn from_name(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

label_enum!(
    /// Object color label; each color has a reserved render color.
    Color {
        Red => "red",
        Green => "green",
        Blue => "blue",
        Yellow => "yellow",
        Purple => "purple",
        Orange => "orange",
        White => "white",
        Pink => "pink",
    }
);

label_enum!(
    ObjectKind {
        Chest => "chest",
        Box => "box",
        Ball => "ball",
        Lamp => "lamp",
        Chair => "chair",
        Table => "table",
        Plant => "plant",
        Vase => "vase",
    }
);

label_enum!(
    RoomKind {
        Kitchen => "kitchen",
        Bedroom => "bedroom",
        Office => "office",
        Bathroom => "bathroom",
        Hall => "hall",
        Study => "study",
    }
);

impl Color {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [0.90, 0.10, 0.10],
            Color::Green => [0.10, 0.80, 0.15],
            Color::Blue => [0.10, 0.20, 0.90],
            Color::Yellow => [0.95, 0.90, 0.10],
            Color::Purple => [0.60, 0.10, 0.80],
            Color::Orange => [1.00, 0.55, 0.00],
            Color::White => [1.00, 1.00, 1.00],
            Color::Pink => [1.00, 0.50, 0.75],
        }
    }
}

/// Inclusive rectangle of floor cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
    pub kind: RoomKind,
}

impl Room {
    pub fn contains(&self, p: Pos) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn width(&self) -> i32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: usize,
    pub color: Color,
    pub kind: ObjectKind,
    pub pos: Pos,
}

impl WorldObject {
    pub fn label(&self) -> String {
        format!("{} {}", self.color, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub width: usize,
    pub height: usize,
    pub rooms: usize,
    pub objects: usize,
    /// Minimum interior side of a room.
    pub min_room_side: usize,
    pub max_retries: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 12,
            height: 12,
            rooms: 3,
            objects: 5,
            min_room_side: 3,
            max_retries: 64,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidConfig(format!(
                "world must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if self.rooms < 2 {
            return Err(Error::InvalidConfig("at least 2 rooms required".into()));
        }
        if self.objects == 0 || self.objects > Color::ALL.len() {
            return Err(Error::InvalidConfig(format!(
                "object count must be in 1..={}",
                Color::ALL.len()
            )));
        }
        if self.min_room_side == 0 {
            return Err(Error::InvalidConfig("min_room_side must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    rooms: Vec<Room>,
    objects: Vec<WorldObject>,
    seed: u64,
}

/// Build a world from `seed`. Identical seeds and configs give identical worlds.
pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<GridWorld> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_reason = String::new();
    for _ in 0..config.max_retries.max(1) {
        match try_generate(&mut rng, config, seed) {
            Ok(world) => return Ok(world),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::GenerationFailure {
        attempts: config.max_retries.max(1),
        reason: last_reason,
    })
}

fn try_generate(
    rng: &mut ChaCha8Rng,
    config: &WorldConfig,
    seed: u64,
) -> std::result::Result<GridWorld, String> {
    let (w, h) = (config.width as i32, config.height as i32);
    let min = config.min_room_side as i32;
    let mut cells = vec![Cell::Wall; (w * h) as usize];
    let idx = |x: i32, y: i32| (y * w + x) as usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            cells[idx(x, y)] = Cell::Floor;
        }
    }

    // (x0, y0, x1, y1) inclusive
    let mut rects: Vec<(i32, i32, i32, i32)> = vec![(1, 1, w - 2, h - 2)];
    while rects.len() < config.rooms {
        let splittable = |r: &(i32, i32, i32, i32)| {
            let (rw, rh) = (r.2 - r.0 + 1, r.3 - r.1 + 1);
            (rw >= 2 * min + 1, rh >= 2 * min + 1)
        };
        let pick = rects
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                let (a, b) = splittable(r);
                a || b
            })
            .max_by(|(ia, a), (ib, b)| {
                let area_a = (a.2 - a.0 + 1) * (a.3 - a.1 + 1);
                let area_b = (b.2 - b.0 + 1) * (b.3 - b.1 + 1);
                area_a.cmp(&area_b).then(ib.cmp(ia))
            })
            .map(|(i, _)| i);
        let Some(ri) = pick else {
            return Err(format!("cannot fit {} rooms", config.rooms));
        };
        let r = rects[ri];
        let (can_v, can_h) = splittable(&r);
        let (rw, rh) = (r.2 - r.0 + 1, r.3 - r.1 + 1);
        let vertical = match (can_v, can_h) {
            (true, false) => true,
            (false, true) => false,
            _ if rw != rh => rw > rh,
            _ => rng.random_bool(0.5),
        };

        // Split lines may not abut an existing door in the enclosing wall.
        let candidates: Vec<i32> = if vertical {
            (r.0 + min..=r.2 - min)
                .filter(|&c| cells[idx(c, r.1 - 1)] == Cell::Wall && cells[idx(c, r.3 + 1)] == Cell::Wall)
                .collect()
        } else {
            (r.1 + min..=r.3 - min)
                .filter(|&c| cells[idx(r.0 - 1, c)] == Cell::Wall && cells[idx(r.2 + 1, c)] == Cell::Wall)
                .collect()
        };
        let Some(&line) = candidates.choose(rng) else {
            return Err("no admissible split line".into());
        };
        if vertical {
            for y in r.1..=r.3 {
                cells[idx(line, y)] = Cell::Wall;
            }
            let door = rng.random_range(r.1..=r.3);
            cells[idx(line, door)] = Cell::Floor;
            rects[ri] = (r.0, r.1, line - 1, r.3);
            rects.push((line + 1, r.1, r.2, r.3));
        } else {
            for x in r.0..=r.2 {
                cells[idx(x, line)] = Cell::Wall;
            }
            let door = rng.random_range(r.0..=r.2);
            cells[idx(door, line)] = Cell::Floor;
            rects[ri] = (r.0, r.1, r.2, line - 1);
            rects.push((r.0, line + 1, r.2, r.3));
        }
    }

    let mut kinds: Vec<RoomKind> = RoomKind::ALL.to_vec();
    kinds.shuffle(rng);
    let rooms: Vec<Room> = rects
        .iter()
        .enumerate()
        .map(|(i, &(x0, y0, x1, y1))| Room {
            x0,
            y0,
            x1,
            y1,
            kind: kinds[i % kinds.len()],
        })
        .collect();

    let mut spots: Vec<Pos> = rooms
        .iter()
        .flat_map(|r| (r.y0..=r.y1).flat_map(move |y| (r.x0..=r.x1).map(move |x| Pos::new(x, y))))
        .collect();
    if spots.len() < config.objects {
        return Err("not enough room cells for objects".into());
    }
    spots.shuffle(rng);
    let mut colors: Vec<Color> = Color::ALL.to_vec();
    colors.shuffle(rng);
    let objects: Vec<WorldObject> = (0..config.objects)
        .map(|id| WorldObject {
            id,
            color: colors[id],
            kind: ObjectKind::ALL[rng.random_range(0..ObjectKind::ALL.len())],
            pos: spots[id],
        })
        .collect();

    let world = GridWorld {
        width: config.width,
        height: config.height,
        cells,
        rooms,
        objects,
        seed,
    };
    world.check_invariants().map_err(|e| e.to_string())?;
    Ok(world)
}

impl GridWorld {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rooms(&self) -> &[Room] {
        &self.rooms
    }

    pub fn objects(&self) -> &[WorldObject] {
        &self.objects
    }

    pub fn object(&self, id: usize) -> Result<&WorldObject> {
        self.objects.get(id).ok_or(Error::UnknownSubgoal(id))
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// Cells outside the grid read as wall.
    pub fn cell(&self, p: Pos) -> Cell {
        if self.in_bounds(p) {
            self.cells[p.y as usize * self.width + p.x as usize]
        } else {
            Cell::Wall
        }
    }

    pub fn is_floor(&self, p: Pos) -> bool {
        self.cell(p) == Cell::Floor
    }

    pub fn object_at(&self, p: Pos) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.pos == p)
    }

    pub fn room_of(&self, p: Pos) -> Option<&Room> {
        self.rooms.iter().find(|r| r.contains(p))
    }

    pub fn floor_cells(&self) -> Vec<Pos> {
        (0..self.height as i32)
            .flat_map(|y| (0..self.width as i32).map(move |x| Pos::new(x, y)))
            .filter(|&p| self.is_floor(p))
            .collect()
    }

    /// Verifies object placement and floor connectivity.
    pub fn check_invariants(&self) -> Result<()> {
        if self.cells.len() != self.width * self.height {
            return Err(Error::malformed("world", "cell count does not match dimensions"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return Err(Error::malformed("world", format!("object {} has id {}", i, o.id)));
            }
            if !self.is_floor(o.pos) {
                return Err(Error::malformed("world", format!("object {} not on floor", o.id)));
            }
            if !seen.insert(o.pos) {
                return Err(Error::malformed("world", format!("object {} shares a cell", o.id)));
            }
        }
        let floor = self.floor_cells();
        let Some(&start) = floor.first() else {
            return Err(Error::malformed("world", "no floor cells"));
        };
        let mut visited = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([start]);
        visited[start.y as usize * self.width + start.x as usize] = true;
        let mut count = 1;
        while let Some(p) = queue.pop_front() {
            for (dx, dy) in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
                let q = Pos::new(p.x + dx, p.y + dy);
                if self.is_floor(q) {
                    let i = q.y as usize * self.width + q.x as usize;
                    if !visited[i] {
                        visited[i] = true;
                        count += 1;
                        queue.push_back(q);
                    }
                }
            }
        }
        if count != floor.len() {
            return Err(Error::malformed(
                "world",
                format!("floor is disconnected ({count} of {} reachable)", floor.len()),
            ));
        }
        Ok(())
    }

    pub fn to_document(&self) -> WorldDocument {
        let mut grid_rle: Vec<(Cell, u32)> = Vec::new();
        for &c in &self.cells {
            match grid_rle.last_mut() {
                Some((last, n)) if *last == c => *n += 1,
                _ => grid_rle.push((c, 1)),
            }
        }
        WorldDocument {
            version: WORLD_FORMAT_VERSION,
            seed: self.seed,
            width: self.width,
            height: self.height,
            grid_rle,
            rooms: self.rooms.clone(),
            objects: self.objects.clone(),
        }
    }

    pub fn from_document(doc: WorldDocument) -> Result<Self> {
        if doc.version != WORLD_FORMAT_VERSION {
            return Err(Error::Version {
                what: "world".into(),
                found: doc.version,
            });
        }
        let mut cells = Vec::with_capacity(doc.width * doc.height);
        for &(c, n) in &doc.grid_rle {
            cells.extend(std::iter::repeat_n(c, n as usize));
        }
        let world = GridWorld {
            width: doc.width,
            height: doc.height,
            cells,
            rooms: doc.rooms,
            objects: doc.objects,
            seed: doc.seed,
        };
        world.check_invariants()?;
        Ok(world)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    /// ASCII map for debugging: `#` wall, `.` floor, first letter of the color for objects.
    pub fn ascii(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let p = Pos::new(x, y);
                let ch = match self.object_at(p) {
                    Some(o) => o.color.name().chars().next().unwrap_or('?'),
                    None if self.is_floor(p) => '.',
                    None => '#',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Versioned JSON form of a world with a run-length encoded grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldDocument {
    pub version: u32,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub grid_rle: Vec<(Cell, u32)>,
    pub rooms: Vec<Room>,
    pub objects: Vec<WorldObject>,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Hand-built open room used by several unit tests.
    pub(crate) fn open_world(width: usize, height: usize, objects: &[(Color, ObjectKind, Pos)]) -> GridWorld {
        let mut cells = vec![Cell::Wall; width * height];
        for y in 1..height - 1 {
            for x in 1..width - 1 {
                cells[y * width + x] = Cell::Floor;
            }
        }
        GridWorld {
            width,
            height,
            cells,
            rooms: vec![Room {
                x0: 1,
                y0: 1,
                x1: width as i32 - 2,
                y1: height as i32 - 2,
                kind: RoomKind::Hall,
            }],
            objects: objects
                .iter()
                .enumerate()
                .map(|(id, &(color, kind, pos))| WorldObject { id, color, kind, pos })
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn three_room_world_is_connected() {
        let cfg = WorldConfig {
            width: 16,
            height: 16,
            rooms: 3,
            ..Default::default()
        };
        let w = generate_world(7, &cfg).unwrap();
        assert_eq!(w.rooms().len(), 3);
        w.check_invariants().unwrap();
    }

    #[test]
    fn same_seed_same_world() {
        let cfg = WorldConfig {
            width: 16,
            height: 16,
            rooms: 3,
            ..Default::default()
        };
        assert_eq!(generate_world(7, &cfg).unwrap(), generate_world(7, &cfg).unwrap());
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = WorldConfig {
            width: 16,
            height: 16,
            rooms: 3,
            ..Default::default()
        };
        let a = generate_world(7, &cfg).unwrap().to_json().unwrap();
        let b = generate_world(8, &cfg).unwrap().to_json().unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn too_many_rooms_fails() {
        let cfg = WorldConfig {
            width: 8,
            height: 8,
            rooms: 9,
            max_retries: 4,
            ..Default::default()
        };
        assert!(matches!(generate_world(1, &cfg), Err(Error::GenerationFailure { .. })));
    }

    #[test]
    fn small_config_rejected() {
        let cfg = WorldConfig {
            width: 7,
            ..Default::default()
        };
        assert!(matches!(generate_world(1, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn json_round_trip() {
        let w = generate_world(3, &WorldConfig::default()).unwrap();
        let back = GridWorld::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn many_seeds_satisfy_invariants() {
        let cfg = WorldConfig {
            width: 10,
            height: 10,
            rooms: 2,
            objects: 4,
            ..Default::default()
        };
        for seed in 0..200 {
            let w = generate_world(seed, &cfg).unwrap();
            w.check_invariants().unwrap();
            assert_eq!(w.objects().len(), 4);
        }
    }
}
