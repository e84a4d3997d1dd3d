use std::collections::BTreeMap;
use std::sync::Arc;

use super::{gen_room, place_links, Column, Link, Opening, RoomScene, RoomSpec};
use crate::error::Result;
use crate::tracer::SceneGeometry;

/// A generated room with its links.
#[derive(Debug, Clone)]
pub struct EvalRoom {
    pub name: String,
    pub room: RoomScene,
    pub geometry: Arc<SceneGeometry>,
    pub links: Vec<Link>,
}

/// Training room plus two held-out rooms: one with the same walls and
/// moved columns, one with a different shape.
#[derive(Debug, Clone)]
pub struct EvalSuite {
    pub rooms: Vec<EvalRoom>,
}

impl EvalSuite {
    pub fn room(&self, name: &str) -> Option<&EvalRoom> {
        self.rooms.iter().find(|r| r.name == name)
    }

    pub fn geometries(&self) -> BTreeMap<String, Arc<SceneGeometry>> {
        self.rooms.iter().map(|r| (r.name.clone(), r.geometry.clone())).collect()
    }
}

fn column(x: f64, y: f64, radius: f64, height: f64, material: u32) -> Column {
    Column {
        center: [x, y],
        radius,
        height,
        material,
    }
}

pub fn room_a() -> RoomSpec {
    RoomSpec {
        extents: [8.0, 6.0, 3.0],
        wall_materials: [0, 1, 2, 3],
        floor_material: 5,
        ceiling_material: 3,
        columns: vec![column(2.5, 3.0, 0.3, 3.0, 0), column(5.5, 2.0, 0.25, 2.2, 4)],
        openings: vec![Opening {
            wall: 3,
            u: [6.0, 7.0],
            v: [0.0, 2.1],
        }],
        spacing: 0.08,
    }
}

pub fn room_b() -> RoomSpec {
    RoomSpec {
        columns: vec![column(3.5, 4.2, 0.3, 3.0, 0), column(6.0, 3.5, 0.25, 2.2, 4)],
        ..room_a()
    }
}

pub fn room_c() -> RoomSpec {
    RoomSpec {
        extents: [7.0, 5.0, 3.2],
        wall_materials: [3, 0, 1, 2],
        floor_material: 5,
        ceiling_material: 3,
        columns: vec![column(4.5, 2.5, 0.35, 3.2, 0), column(1.5, 1.2, 0.3, 1.2, 4)],
        openings: vec![],
        spacing: 0.08,
    }
}

/// Rooms A, B and C with `n_links` links each (train room first).
pub fn make_eval_suite(seed: u64, n_links: [usize; 3]) -> Result<EvalSuite> {
    let mut rooms = Vec::new();
    for ((name, spec), n) in [("room-a", room_a()), ("room-b", room_b()), ("room-c", room_c())]
        .into_iter()
        .zip(n_links)
    {
        let room = gen_room(&spec, seed)?;
        let links = place_links(&room, name, n, seed)?;
        rooms.push(EvalRoom {
            name: name.to_string(),
            geometry: room.geometry()?,
            room,
            links,
        });
    }
    Ok(EvalSuite { rooms })
}
