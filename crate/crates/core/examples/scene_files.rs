//! Write a generated room in the on-disk scene format (TOML scene file,
//! point records, material table) and load it back.
//!
//! cargo run --release --example scene_files -- <out_dir>

use cloudray::io::SceneFile;
use cloudray::scenegen::{gen_room, place_links, room_c};

fn main() -> cloudray::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "scene-out".into());
    let out = std::path::Path::new(&out);
    std::fs::create_dir_all(out)?;
    let room = gen_room(&room_c(), 3)?;
    let geo = room.geometry()?;
    let link = &place_links(&room, "room-c", 1, 3)?[0];
    let file = SceneFile {
        tx: Some(link.tx.into()),
        rx: Some(link.rx.into()),
        freq: Some(28e9),
        ..SceneFile::geometry_only(&geo)
    };
    file.write_with(&out.join("scene.toml"), &geo)?;
    let loaded = SceneFile::load(&out.join("scene.toml"))?;
    assert_eq!(loaded.geometry.cloud, room.cloud);
    let scene = loaded.scene()?;
    println!(
        "{} points, {} edges, tx {:?}, rx {:?} -> {}",
        loaded.geometry.cloud.len(),
        loaded.geometry.edges.len(),
        scene.tx.as_slice(),
        scene.rx.as_slice(),
        out.display()
    );
    Ok(())
}
