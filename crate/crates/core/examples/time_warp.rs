//! Random monotone time warps used by the augmented method.

use covdetect::synthetic::{generate_event, SynthConfig};
use covdetect::trigger::{augmentation_seed, time_warp, warp_map, WarpConfig};

fn main() -> covdetect::Result<()> {
    let event = generate_event(&SynthConfig { seed: 9, ..Default::default() }, 0)?;
    let cfg = WarpConfig::default();

    let phi = warp_map(event.len(), &cfg, 1);
    for t in (0..event.len()).step_by(500) {
        println!("output sample {t:>5} reads source position {:>8.1}", phi[t]);
    }

    println!("original onset {:?}", event.onset_index);
    for copy in 0..5 {
        let warped = time_warp(&event, &cfg, augmentation_seed(0, &event.id, copy))?;
        println!("copy {copy}: onset {:?}", warped.onset_index);
    }

    let none = time_warp(&event, &WarpConfig { strength: 0.0, ..cfg }, 1)?;
    println!("strength 0 leaves the record unchanged: {}", none == event);
    Ok(())
}
