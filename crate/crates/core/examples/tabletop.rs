//! Scripts one demonstration per task and writes front-camera previews of
//! every keyframe.
//!
//! ```text
//! cargo run --release --example tabletop -- out/tabletop
//! ```

use std::path::PathBuf;

use splatworld::persistence::write_png;
use splatworld::synthetic::{raycast_render, script_episode, CameraRig, Task};

fn main() -> splatworld::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/tabletop".into()));
    let rig = CameraRig::new(128, 128, 4)?;
    for task in Task::ALL {
        let episode = script_episode(task, 0)?;
        println!("{task}: {} keyframes", episode.keyframes.len());
        for (k, frame) in episode.keyframes.iter().enumerate() {
            let a = frame.action;
            println!(
                "  kf{k}: gripper at {:?}, next bin {} rot {:?} open {} collide {}",
                frame.proprioception, a.translation_bin, a.rotation_bins, a.openness, a.collision
            );
            for (c, cam) in rig.all().enumerate().take(2) {
                let img = raycast_render(&frame.state, cam);
                write_png(&out.join(format!("{task}_kf{k}_cam{c}.png")), 128, 128, &img.rgb.to_rgb8())?;
            }
        }
    }
    println!("previews in {}", out.display());
    Ok(())
}
