//! Scratch calibration harness (not part of the library surface).

use aaf_core::pipeline::preset;
use aaf_fsod::classes::ClassSplit;
use aaf_fsod::episode::{sample_episode, Phase};
use aaf_fsod::model::{init_detector_params, DetectorSpec};
use aaf_fsod::scene::LayoutParams;
use aaf_fsod::train::{class_average_precisions, run_training, Schedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn overfit_trace(name: &str, lr: f64, seed: u64) {
    let spec = DetectorSpec::new(preset(name).unwrap());
    let layout = LayoutParams::default();
    let split = ClassSplit::default_split();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episode = sample_episode(&mut rng, &split, Phase::Base, 2, 1, 3, &layout, None).unwrap();
    let mut params = init_detector_params(&spec, &mut rng).unwrap();
    run_overfit(name, lr, seed, &spec, episode, &mut params);
}

fn overfit_pair_decay(name: &str, peak_lr: f64, seed: u64) {
    use aaf_fsod::classes::{ClassId, ColorTag, ShapeKind};
    use aaf_fsod::episode::{fresh_support_crop, Episode};
    use aaf_fsod::scene::generate_scene;
    use std::collections::BTreeMap;
    let spec = DetectorSpec::new(preset(name).unwrap());
    let layout = LayoutParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = vec![
        ClassId::new(ShapeKind::Square, ColorTag::Red),
        ClassId::new(ShapeKind::Disk, ColorTag::Blue),
    ];
    let mut support = BTreeMap::new();
    for &c in &classes {
        support.insert(c, vec![fresh_support_crop(&mut rng, c, &layout)]);
    }
    let queries = (0..6).map(|_| generate_scene(&mut rng, &classes, &layout)).collect();
    let episode = Episode {
        classes,
        support,
        queries,
    };
    let mut params = init_detector_params(&spec, &mut rng).unwrap();
    let schedule = Schedule::default();
    let t0 = Instant::now();
    let total = 500usize;
    let mut step = 0usize;
    for checkpoint in [100usize, 200, 300, 400, 500] {
        while step < checkpoint {
            let lr = peak_lr * (1.0 - 0.9 * step as f64 / total as f64);
            aaf_fsod::train::train_episode(&mut params, &spec, &episode, 8, lr).unwrap();
            step += 1;
        }
        let aps =
            class_average_precisions(&params, &spec, &episode.support, &episode.queries, &schedule)
                .unwrap();
        let map = aps.values().sum::<f64>() / aps.len().max(1) as f64;
        println!(
            "decay {name} peak={peak_lr} seed={seed} step={step} map={map:.3} elapsed={:.1}s",
            t0.elapsed().as_secs_f64()
        );
    }
}

fn overfit_pair(name: &str, lr: f64, seed: u64) {
    use aaf_fsod::classes::{ClassId, ColorTag, ShapeKind};
    use aaf_fsod::episode::{fresh_support_crop, Episode};
    use aaf_fsod::scene::generate_scene;
    use std::collections::BTreeMap;
    let spec = DetectorSpec::new(preset(name).unwrap());
    let layout = LayoutParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = vec![
        ClassId::new(ShapeKind::Square, ColorTag::Red),
        ClassId::new(ShapeKind::Disk, ColorTag::Blue),
    ];
    let mut support = BTreeMap::new();
    for &c in &classes {
        support.insert(c, vec![fresh_support_crop(&mut rng, c, &layout)]);
    }
    let queries = (0..6).map(|_| generate_scene(&mut rng, &classes, &layout)).collect();
    let episode = Episode {
        classes,
        support,
        queries,
    };
    let mut params = init_detector_params(&spec, &mut rng).unwrap();
    run_overfit(name, lr, seed, &spec, episode, &mut params);
}

fn run_overfit(
    name: &str,
    lr: f64,
    seed: u64,
    spec: &DetectorSpec,
    episode: aaf_fsod::episode::Episode,
    params: &mut aaf_core::ParamSet64,
) {
    let schedule = Schedule::default();
    let t0 = Instant::now();
    let mut step = 0usize;
    for checkpoint in [50usize, 100, 200, 300, 500] {
        while step < checkpoint {
            // one full-batch pass over the 6 query scenes
            aaf_fsod::train::train_episode(params, spec, &episode, 8, lr).unwrap();
            step += 1;
        }
        let aps =
            class_average_precisions(params, spec, &episode.support, &episode.queries, &schedule)
                .unwrap();
        let map = aps.values().sum::<f64>() / aps.len().max(1) as f64;
        println!(
            "overfit {name} lr={lr} seed={seed} step={step} map={map:.3} elapsed={:.1}s",
            t0.elapsed().as_secs_f64()
        );
    }
}

fn trend_probe(name: &str, schedule: &Schedule, k: usize, seed: u64) {
    let spec = DetectorSpec::new(preset(name).unwrap());
    let split = ClassSplit::default_split();
    let t0 = Instant::now();
    let out = run_training(&spec, &split, schedule, k, seed).unwrap();
    println!(
        "trend {name} k={k} seed={seed} base={:.3} novel={:.3} elapsed={:.1}s",
        out.report.base_map,
        out.report.novel_map,
        t0.elapsed().as_secs_f64()
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("overfit");
    match mode {
        "overfit" => {
            for name in ["frw", "drl", "dana_lite", "mfrcn_lite"] {
                overfit_trace(name, 1e-3, 42);
            }
        }
        "overfit-hot" => {
            for name in ["frw", "drl", "dana_lite", "mfrcn_lite"] {
                overfit_trace(name, 3e-3, 42);
            }
        }
        "sweep" => {
            for lr in [6e-3, 1e-2, 2e-2] {
                overfit_trace("frw", lr, 42);
                overfit_trace("mfrcn_lite", lr, 42);
            }
        }
        "pair" => {
            for lr in [3e-3, 1e-2] {
                for name in ["frw", "drl", "dana_lite", "mfrcn_lite"] {
                    overfit_pair(name, lr, 42);
                }
            }
        }
        "pair-decay" => {
            for lr in [1e-2, 2e-2, 4e-2] {
                for name in ["frw", "drl", "dana_lite", "mfrcn_lite"] {
                    overfit_pair_decay(name, lr, 42);
                }
            }
        }
        "debug" => {
            use aaf_core::GradTape64;
            use aaf_fsod::detect::{decode_cells, nms};
            use aaf_fsod::model::{detector_forward, support_feature_maps};
            let spec = DetectorSpec::new(preset("frw").unwrap());
            let layout = LayoutParams::default();
            let split = ClassSplit::default_split();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let episode =
                sample_episode(&mut rng, &split, Phase::Base, 2, 1, 3, &layout, None).unwrap();
            let mut params = init_detector_params(&spec, &mut rng).unwrap();
            for _ in 0..500 {
                aaf_fsod::train::train_episode(&mut params, &spec, &episode, 8, 1e-2).unwrap();
            }
            let schedule = Schedule::default();
            let aps = class_average_precisions(
                &params,
                &spec,
                &episode.support,
                &episode.queries,
                &schedule,
            )
            .unwrap();
            println!("classes: {:?}", episode.classes);
            for (c, ap) in &aps {
                println!("ap[{c}] = {ap:.3}");
            }
            let mut tape = GradTape64::new();
            let bindings = params.bind(&mut tape);
            let sup = support_feature_maps(&mut tape, &bindings, &spec, &episode.support).unwrap();
            for (si, scene) in episode.queries.iter().take(2).enumerate() {
                println!("--- scene {si} ---");
                for (c, bb) in &scene.objects {
                    println!(
                        "gt {c}: [{:.0},{:.0},{:.0},{:.0}]",
                        bb.x0, bb.y0, bb.x1, bb.y1
                    );
                }
                let heads =
                    detector_forward(&mut tape, &bindings, &spec, &scene.image, &sup).unwrap();
                for class in episode.support.keys() {
                    for level in &heads {
                        let raw = tape.value(level.class_outputs[class]);
                        let dets = decode_cells(raw, level.grid, level.stride, 0.05);
                        let kept = nms(dets, 0.5, 5);
                        for (score, bb) in kept {
                            let best = scene
                                .objects
                                .iter()
                                .map(|(gc, g)| {
                                    (aaf_fsod::compute_iou(&bb, g), format!("{gc}"))
                                })
                                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                            println!(
                                "det {class} s={score:.2} [{:.0},{:.0},{:.0},{:.0}] best_iou={:?}",
                                bb.x0, bb.y0, bb.x1, bb.y1, best
                            );
                        }
                    }
                }
            }
        }
        "trend" => {
            let schedule = Schedule {
                base_episodes: args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30),
                finetune_episodes: args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10),
                n_way: 5,
                queries_per_class: args.get(5).map(|s| s.parse().unwrap()).unwrap_or(4),
                batch_size: 8,
                eval_scenes: args.get(6).map(|s| s.parse().unwrap()).unwrap_or(24),
                ..Schedule::default()
            };
            let preset_name = args.get(4).map(|s| s.as_str()).unwrap_or("frw");
            let mut schedule = schedule;
            if let Some(lr) = args.get(7) {
                schedule.base_lr = lr.parse().unwrap();
                schedule.finetune_lr = schedule.base_lr / 10.0;
            }
            for k in [1usize, 5] {
                for seed in [0u64, 1] {
                    trend_probe(preset_name, &schedule, k, seed);
                }
            }
        }
        "grid" => {
            use rayon::prelude::*;
            let schedule = Schedule {
                base_episodes: args.get(2).map(|s| s.parse().unwrap()).unwrap_or(100),
                finetune_episodes: args.get(3).map(|s| s.parse().unwrap()).unwrap_or(25),
                n_way: 5,
                queries_per_class: 8,
                batch_size: 8,
                eval_scenes: 80,
                base_lr: args.get(5).map(|s| s.parse().unwrap()).unwrap_or(5e-3),
                finetune_lr: args
                    .get(5)
                    .map(|s| s.parse::<f64>().unwrap() / 10.0)
                    .unwrap_or(5e-4),
                layout: LayoutParams {
                    support_shift: args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0.25),
                    support_light: args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0.0),
                    support_gray: args.get(9).map(|s| s.parse().unwrap()).unwrap_or(0.0),
                    ..LayoutParams::default()
                },
                warmup_episodes: args.get(10).map(|s| s.parse().unwrap()).unwrap_or(0),
                final_lr_frac: args.get(11).map(|s| s.parse().unwrap()).unwrap_or(1.0),
                ..Schedule::default()
            };
            let preset_name = args
                .get(4)
                .map(|s| s.to_string())
                .unwrap_or_else(|| "frw".into());
            let n_seeds: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(5);
            let seeds: Vec<u64> = (0..n_seeds).collect();
            let mut cells: Vec<(usize, u64)> = Vec::new();
            for k in [1usize, 5] {
                for &s in &seeds {
                    cells.push((k, s));
                }
            }
            let results: Vec<(usize, u64, f64, f64)> = cells
                .par_iter()
                .map(|&(k, seed)| {
                    let spec = DetectorSpec::new(preset(&preset_name).unwrap());
                    let split = ClassSplit::default_split();
                    let out = run_training(&spec, &split, &schedule, k, seed).unwrap();
                    (k, seed, out.report.base_map, out.report.novel_map)
                })
                .collect();
            let mut means = std::collections::BTreeMap::new();
            for &(k, seed, base, novel) in &results {
                println!("grid {preset_name} k={k} seed={seed} base={base:.3} novel={novel:.3}");
                let e = means.entry(k).or_insert((0.0, 0.0, 0));
                e.0 += base;
                e.1 += novel;
                e.2 += 1;
            }
            for (k, (b, n, c)) in means {
                println!(
                    "mean {preset_name} k={k} base={:.3} novel={:.3}",
                    b / c as f64,
                    n / c as f64
                );
            }
        }
        "basin" => {
            // Loss trajectory + per-class APs for one (preset, seed).
            let preset_name = args.get(2).map(|s| s.as_str()).unwrap_or("drl").to_string();
            let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0);
            let layout = LayoutParams {
                support_gray: 0.5,
                ..LayoutParams::default()
            };
            let schedule = Schedule {
                base_episodes: 500,
                finetune_episodes: 60,
                n_way: 5,
                queries_per_class: 8,
                batch_size: 8,
                eval_scenes: 80,
                base_lr: 8e-3,
                finetune_lr: 8e-4,
                layout,
                score_thresh: args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.05),
                max_detections: args.get(5).map(|s| s.parse().unwrap()).unwrap_or(20),
                ..Schedule::default()
            };
            let spec = DetectorSpec::new(preset(&preset_name).unwrap());
            let split = ClassSplit::default_split();
            let out = run_training(&spec, &split, &schedule, 1, seed).unwrap();
            let losses: Vec<f64> = out
                .metrics_csv
                .lines()
                .skip(1)
                .filter(|l| l.contains(",base,") || l.contains(",finetune,"))
                .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
                .collect();
            for (i, chunk) in losses.chunks(50).enumerate() {
                let m = chunk.iter().sum::<f64>() / chunk.len() as f64;
                println!("basin {preset_name} seed={seed} ep={} mean_loss={m:.4}", i * 50);
            }
            println!(
                "basin {preset_name} seed={seed} base={:.3} novel={:.3}",
                out.report.base_map, out.report.novel_map
            );
            for (c, ap) in &out.report.per_class_ap {
                println!("    {c} ap={ap:.3}");
            }
        }
        "sens4" => {
            use aaf_fsod::episode::fresh_support_crop;
            use aaf_fsod::scene::generate_scene;
            use std::collections::BTreeMap;
            let configs = [(0.6f64, 0.0f64), (0.9, 0.0), (0.25, 0.35), (0.8, 0.3)];
            let split = ClassSplit::default_split();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            for (shift, light) in configs {
                let layout = LayoutParams {
                    support_shift: shift,
                    support_light: light,
                    ..LayoutParams::default()
                };
                let schedule = Schedule {
                    base_episodes: 300,
                    finetune_episodes: 60,
                    n_way: 5,
                    queries_per_class: 8,
                    batch_size: 8,
                    eval_scenes: 80,
                    base_lr: 8e-3,
                    finetune_lr: 8e-4,
                    layout: layout.clone(),
                    ..Schedule::default()
                };
                let spec = DetectorSpec::new(preset("frw").unwrap());
                let out = run_training(&spec, &split, &schedule, 1, 0).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(999);
                let palette = split.all();
                let scenes: Vec<_> =
                    (0..80).map(|_| generate_scene(&mut rng, &palette, &layout)).collect();
                for eval_k in [1usize, 5] {
                    let mut novel_accum = vec![];
                    let mut base_accum = vec![];
                    for _ in 0..4 {
                        let mut support: BTreeMap<_, Vec<_>> = BTreeMap::new();
                        for class in split.all() {
                            let shots = (0..eval_k)
                                .map(|_| fresh_support_crop(&mut rng, class, &layout))
                                .collect::<Vec<_>>();
                            support.insert(class, shots);
                        }
                        let aps = class_average_precisions(
                            &out.params,
                            &spec,
                            &support,
                            &scenes,
                            &schedule,
                        )
                        .unwrap();
                        novel_accum.push(mean(
                            &split
                                .novel()
                                .iter()
                                .filter_map(|c| aps.get(c).copied())
                                .collect::<Vec<_>>(),
                        ));
                        base_accum.push(mean(
                            &split
                                .base()
                                .iter()
                                .filter_map(|c| aps.get(c).copied())
                                .collect::<Vec<_>>(),
                        ));
                    }
                    println!(
                        "sens4 shift={shift} light={light} eval_k={eval_k} novel={:.3} base={:.3} novel_per_draw={:?}",
                        mean(&novel_accum),
                        mean(&base_accum),
                        novel_accum.iter().map(|a| (a * 100.0).round() / 100.0).collect::<Vec<_>>()
                    );
                }
            }
        }
        "sens3" => {
            use aaf_fsod::classes::{ClassId, ColorTag, ShapeKind};
            use aaf_fsod::episode::fresh_support_crop;
            use aaf_fsod::scene::generate_scene;
            use std::collections::BTreeMap;
            let schedule = Schedule {
                base_episodes: 300,
                finetune_episodes: 60,
                n_way: 5,
                queries_per_class: 8,
                batch_size: 8,
                eval_scenes: 80,
                base_lr: 8e-3,
                finetune_lr: 8e-4,
                ..Schedule::default()
            };
            let novel = vec![
                ClassId::new(ShapeKind::Square, ColorTag::Blue),
                ClassId::new(ShapeKind::Disk, ColorTag::Red),
                ClassId::new(ShapeKind::Triangle, ColorTag::Blue),
            ];
            let base: Vec<ClassId> = aaf_fsod::classes::ALL_CLASSES
                .iter()
                .copied()
                .filter(|c| !novel.contains(c))
                .collect();
            let split = ClassSplit::new(base, novel).unwrap();
            let layout = LayoutParams::default();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            for name in ["frw", "drl"] {
                let spec = DetectorSpec::new(preset(name).unwrap());
                let out = run_training(&spec, &split, &schedule, 1, 0).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(999);
                let palette = split.all();
                let scenes: Vec<_> =
                    (0..80).map(|_| generate_scene(&mut rng, &palette, &layout)).collect();
                // Clean k=1 / k=5, plus "shuffled" where each class is
                // conditioned on a random other class's crops.
                for (label, eval_k, shuffled, reps) in [
                    ("clean", 1usize, false, 3usize),
                    ("clean", 5, false, 3),
                    ("wrongproto", 1, true, 2),
                ] {
                    let mut novel_accum = vec![];
                    let mut base_accum = vec![];
                    for _ in 0..reps {
                        let mut support: BTreeMap<ClassId, Vec<_>> = BTreeMap::new();
                        for class in split.all() {
                            let source = if shuffled {
                                // Condition on the class two slots over:
                                // guaranteed different shape or color.
                                let all = split.all();
                                let idx = all.iter().position(|c| *c == class).unwrap();
                                all[(idx + 3) % all.len()]
                            } else {
                                class
                            };
                            let shots = (0..eval_k)
                                .map(|_| fresh_support_crop(&mut rng, source, &layout))
                                .collect::<Vec<_>>();
                            support.insert(class, shots);
                        }
                        let aps = class_average_precisions(
                            &out.params,
                            &spec,
                            &support,
                            &scenes,
                            &schedule,
                        )
                        .unwrap();
                        novel_accum.push(mean(
                            &split
                                .novel()
                                .iter()
                                .filter_map(|c| aps.get(c).copied())
                                .collect::<Vec<_>>(),
                        ));
                        base_accum.push(mean(
                            &split
                                .base()
                                .iter()
                                .filter_map(|c| aps.get(c).copied())
                                .collect::<Vec<_>>(),
                        ));
                    }
                    println!(
                        "sens3 {name} eval={label} k={eval_k} novel={:.3} base={:.3}",
                        mean(&novel_accum),
                        mean(&base_accum)
                    );
                }
            }
        }
        "sens2" => {
            use aaf_fsod::episode::fresh_support_crop;
            use aaf_fsod::geometry::BoundingBox;
            use aaf_fsod::scene::{crop_resize, generate_scene};
            use std::collections::BTreeMap;
            let schedule = Schedule {
                base_episodes: 300,
                finetune_episodes: 60,
                n_way: 5,
                queries_per_class: 8,
                batch_size: 8,
                eval_scenes: 80,
                base_lr: 8e-3,
                finetune_lr: 8e-4,
                ..Schedule::default()
            };
            let spec = DetectorSpec::new(preset("frw").unwrap());
            let split = ClassSplit::default_split();
            let layout = LayoutParams::default();
            let mut rng = ChaCha8Rng::seed_from_u64(999);
            let palette = split.all();
            let scenes: Vec<_> = (0..80).map(|_| generate_scene(&mut rng, &palette, &layout)).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            let junk_crop = |rng: &mut ChaCha8Rng, class| {
                let solo = LayoutParams { min_objects: 1, max_objects: 1, ..layout.clone() };
                let scene = generate_scene(rng, &[class], &solo);
                let (_, bb) = &scene.objects[0];
                // Window in whichever corner is farthest from the object.
                let (w, h) = (scene.image.shape()[1] as f64, scene.image.shape()[0] as f64);
                let cx = if bb.x0 + bb.x1 < w { w - 7.0 } else { 0.5 };
                let cy = if bb.y0 + bb.y1 < h { h - 7.0 } else { 0.5 };
                let window = BoundingBox { x0: cx, y0: cy, x1: cx + 6.0, y1: cy + 6.0 };
                crop_resize(&scene.image, &window, aaf_fsod::scene::SUPPORT_SIZE)
            };
            for train_k in [1usize, 5] {
                let out = run_training(&spec, &split, &schedule, train_k, 0).unwrap();
                for (label, eval_k, junk, reps) in
                    [("clean", 1usize, false, 4usize), ("clean", 5, false, 4), ("junk", 1, true, 2)]
                {
                    let mut novel_accum = vec![];
                    let mut base_accum = vec![];
                    let mut per_class: BTreeMap<_, Vec<f64>> = BTreeMap::new();
                    for _ in 0..reps {
                        let mut support = BTreeMap::new();
                        for class in split.all() {
                            let shots = (0..eval_k)
                                .map(|_| {
                                    if junk {
                                        junk_crop(&mut rng, class)
                                    } else {
                                        fresh_support_crop(&mut rng, class, &layout)
                                    }
                                })
                                .collect::<Vec<_>>();
                            support.insert(class, shots);
                        }
                        let aps =
                            class_average_precisions(&out.params, &spec, &support, &scenes, &schedule)
                                .unwrap();
                        for (c, a) in &aps {
                            per_class.entry(*c).or_default().push(*a);
                        }
                        novel_accum.push(mean(
                            &split.novel().iter().filter_map(|c| aps.get(c).copied()).collect::<Vec<_>>(),
                        ));
                        base_accum.push(mean(
                            &split.base().iter().filter_map(|c| aps.get(c).copied()).collect::<Vec<_>>(),
                        ));
                    }
                    println!(
                        "sens2 train_k={train_k} eval={label} eval_k={eval_k} novel={:.3} base={:.3}",
                        mean(&novel_accum),
                        mean(&base_accum)
                    );
                    if junk || eval_k == 1 {
                        for (c, v) in &per_class {
                            println!("    class {c:?} ap={:.3}", mean(v));
                        }
                    }
                }
            }
        }
        "sens" => {
            use aaf_fsod::episode::fresh_support_crop;
            use aaf_fsod::scene::generate_scene;
            use std::collections::BTreeMap;
            let schedule = Schedule {
                base_episodes: 300,
                finetune_episodes: 60,
                n_way: 5,
                queries_per_class: 8,
                batch_size: 8,
                eval_scenes: 80,
                base_lr: 8e-3,
                finetune_lr: 8e-4,
                ..Schedule::default()
            };
            let spec = DetectorSpec::new(preset("frw").unwrap());
            let split = ClassSplit::default_split();
            let out = run_training(&spec, &split, &schedule, 1, 0).unwrap();
            let layout = LayoutParams::default();
            let mut rng = ChaCha8Rng::seed_from_u64(999);
            let palette = split.all();
            let scenes: Vec<_> = (0..80).map(|_| generate_scene(&mut rng, &palette, &layout)).collect();
            for k in [1usize, 5] {
                for draw in 0..8 {
                    let mut support = BTreeMap::new();
                    for class in split.all() {
                        let shots = (0..k)
                            .map(|_| fresh_support_crop(&mut rng, class, &layout))
                            .collect::<Vec<_>>();
                        support.insert(class, shots);
                    }
                    let aps = class_average_precisions(&out.params, &spec, &support, &scenes, &schedule)
                        .unwrap();
                    let novel: Vec<f64> = split
                        .novel()
                        .iter()
                        .filter_map(|c| aps.get(c).copied())
                        .collect();
                    let base: Vec<f64> = split
                        .base()
                        .iter()
                        .filter_map(|c| aps.get(c).copied())
                        .collect();
                    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
                    println!(
                        "sens k={k} draw={draw} novel={:.3} base={:.3} per_novel={:?}",
                        mean(&novel),
                        mean(&base),
                        novel.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>()
                    );
                }
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}
