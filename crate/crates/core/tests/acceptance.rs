//! Acceptance gate. One PASS/FAIL line per criterion, measured values
//! alongside; exits non-zero if any criterion fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mbanet::data::{self, checkpoint, Domain, GenConfig, Manifest, Split};
use mbanet::eval::{self, cross_domain_table};
use mbanet::fusion::FusionPlan;
use mbanet::gradcheck::{check_model, ModelCheckOptions, ModelProblem};
use mbanet::model::is_fusion_param;
use mbanet::tensor::{Graph, Tensor};
use mbanet::training::{self, AugmentConfig, LrSchedule, Sgd, SgdConfig, TrainConfig};
use mbanet::{Error, MbaNet, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_BUDGET_S: f64 = 600.0;
const OVERFIT_DICE: f64 = 0.95;
const OVERFIT_BUDGET_S: f64 = 900.0;
const OVERFIT_ITERATIONS: usize = 200;
const SGD_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let criteria: [(&str, &dyn Fn(&Path) -> Outcome); 9] = [
        ("gradient integrity", &gradient_integrity),
        ("wiring fidelity", &wiring_fidelity),
        ("zero-fusion identity", &zero_fusion_identity),
        ("overfit sanity", &overfit_sanity),
        ("cross-domain harness", &cross_domain_harness),
        ("ablation grid", &ablation_grid),
        ("determinism", &determinism),
        ("serialization", &serialization),
        ("schedule and optimizer", &schedule_and_optimizer),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let dir = work.path().join(format!("c{}", k + 1));
        fs::create_dir_all(&dir).expect("criterion dir");
        let start = Instant::now();
        let outcome = run(&dir);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                println!("FAIL {} {name}: {detail} [{secs:.1}s]", k + 1);
                failed.push(k + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("all 9 criteria pass");
    } else {
        println!("{} of 9 criteria pass; failing: {failed:?}", 9 - failed.len());
        std::process::exit(1);
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn cli(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mbanet")).args(args).output().map_err(err)?;
    if !out.status.success() {
        return Err(format!(
            "`mbanet {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out)
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn gradient_integrity(_: &Path) -> Outcome {
    let cfg = ModelConfig::default();
    let start = Instant::now();
    let problem = ModelProblem::new(&cfg, 0).map_err(err)?;
    let opts = ModelCheckOptions::default();
    let report = check_model(&problem, opts, |_| {}).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let fraction = report.pass_fraction(GRADCHECK_TOL);
    let worst = report.worst().map_or("-", |p| p.name.as_str());
    let detail = format!(
        "{} tensors, {:.1}% within {GRADCHECK_TOL:e}, max rel err {:.2e} ({worst}), h={:e}, {secs:.0}s",
        report.params.len(),
        100.0 * fraction,
        report.max_rel_err(),
        opts.grad.eps
    );
    check(
        fraction == 1.0 && report.max_rel_err() < GRADCHECK_TOL && opts.grad.eps == 1e-5 && secs < GRADCHECK_BUDGET_S,
        detail,
    )
}

fn wiring_fidelity(_: &Path) -> Outcome {
    let plan = FusionPlan::build(3, 3, 3).map_err(err)?;
    let pairs = |v: &[(usize, usize)]| v.iter().map(|(a, b)| format!("({a},{b})")).collect::<Vec<_>>().join(" ");
    let trace = format!("rfin {}\ndkin {}\n{}", pairs(&plan.rfin), pairs(&plan.dkin), plan.trace());
    let golden = include_str!("golden/plan_m3_r3_d3.txt");
    if trace != golden {
        return Err(format!("trace differs from golden file:\n{trace}"));
    }
    let wired = plan.rfin == [(3, 3), (6, 4), (9, 5)] && plan.dkin == [(6, 10), (7, 11), (8, 12)];
    match FusionPlan::build(2, 3, 3) {
        Err(Error::Cycle(msg)) => check(wired, format!("m=3 trace matches golden; m=2 d=3 rejected: {msg}")),
        Err(e) => Err(format!("m=2 d=3 failed with a non-cycle error: {e}")),
        Ok(_) => Err("m=2 d=3 built a plan".into()),
    }
}

fn zero_fusion_identity(_: &Path) -> Outcome {
    let full = ModelConfig::default();
    let bare = full.with_fusion(0, 0);
    let (model, mut store) = MbaNet::init::<f32>(&full, 11).map_err(err)?;
    let (bare_model, bare_store) = MbaNet::init::<f32>(&bare, 11).map_err(err)?;
    let zeroed = store.fill_where(is_fusion_param, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..10 {
        let low = Tensor::from_fn([1, 1, full.x_c, full.x_c], |_| rng.gen_range(0.0..1.0f32));
        let high = data::high_res_view(&low.clone().reshaped([full.x_c, full.x_c]).map_err(err)?, full.x_s)
            .reshaped([1, 1, full.x_s, full.x_s])
            .map_err(err)?;
        let run = |m: &MbaNet, s: &mbanet::nn::ParamStore<f32>| -> mbanet::Result<Tensor<f32>> {
            let g = Graph::inference();
            let p = s.bind(&g);
            Ok(m.forward(&p, g.constant(high.clone()), g.constant(low.clone()))?.value().as_ref().clone())
        };
        let (a, b) = (run(&model, &store).map_err(err)?, run(&bare_model, &bare_store).map_err(err)?);
        if !a.bit_eq(&b) {
            return Err(format!("input {i}: max |diff| {:.3e}", a.max_abs_diff(&b)));
        }
    }
    Ok(format!("{zeroed} fusion tensors zeroed; 10/10 outputs bitwise equal to the (0,0) model"))
}

fn overfit_data(dir: &Path) -> Result<Manifest, String> {
    data::generate(&GenConfig { seed: 1, counts: [4, 0, 0], size: 64, paired: true }, dir).map_err(err)
}

fn overfit_sanity(dir: &Path) -> Outcome {
    let cfg = ModelConfig::default();
    let manifest = overfit_data(dir)?;
    let samples = data::load_split(&manifest, Split::Train, None, cfg.x_c).map_err(err)?;
    let train_cfg = TrainConfig { lr: 1e-2, augment: AugmentConfig::identity(), ..TrainConfig::default() };
    let start = Instant::now();
    let (model, mut store) = MbaNet::init::<f32>(&cfg, 0).map_err(err)?;
    let log = training::train(&model, &mut store, &samples, &train_cfg, |_| {}).map_err(err)?;
    let dice = eval::evaluate(&model, &store, &samples).map_err(err)?.mean_dice();
    let secs = start.elapsed().as_secs_f64();
    check(
        samples.len() == 8 && log.len() == OVERFIT_ITERATIONS && dice >= OVERFIT_DICE && secs < OVERFIT_BUDGET_S,
        format!(
            "{} samples, {} iterations, training Dice {dice:.4} (need >= {OVERFIT_DICE}), {secs:.0}s",
            samples.len(),
            log.len()
        ),
    )
}

fn cross_domain_harness(dir: &Path) -> Outcome {
    let cfg = ModelConfig::default();
    let manifest = data::generate(&GenConfig { seed: 5, counts: [60, 0, 20], size: 64, paired: true }, dir).map_err(err)?;
    let train_set = data::load_split(&manifest, Split::Train, Some(Domain::A), cfg.x_c).map_err(err)?;
    let test_a = data::load_split(&manifest, Split::Test, Some(Domain::A), cfg.x_c).map_err(err)?;
    let test_b = data::load_split(&manifest, Split::Test, Some(Domain::B), cfg.x_c).map_err(err)?;
    let (model, mut store) = MbaNet::init::<f32>(&cfg, 0).map_err(err)?;
    let untrained_b = eval::evaluate(&model, &store, &test_b).map_err(err)?.mean_dice();
    let train_cfg = TrainConfig { epochs: 10, lr: 1e-2, ..TrainConfig::default() };
    training::train(&model, &mut store, &train_set, &train_cfg, |_| {}).map_err(err)?;
    let report_a = eval::evaluate(&model, &store, &test_a).map_err(err)?;
    let report_b = eval::evaluate(&model, &store, &test_b).map_err(err)?;
    let table = cross_domain_table(Domain::A, &[(Domain::A, &report_a), (Domain::B, &report_b)]);
    fs::write(dir.join("cross_domain.txt"), &table).map_err(err)?;
    let structured = table.contains("in-domain (A->A)")
        && table.contains("cross-domain (A->B)")
        && report_a.row(Domain::A, None).is_some()
        && report_b.row(Domain::B, None).is_some();
    let (a, b) = (report_a.mean_dice(), report_b.mean_dice());
    let mut detail = format!(
        "{} A-train samples; test Dice A {a:.4}, B {b:.4}, untrained B {untrained_b:.4}",
        train_set.len()
    );
    if !(b.is_finite() && b >= untrained_b) {
        write!(detail, "; cross-domain Dice below the untrained model").unwrap();
    }
    for line in table.lines().take(3) {
        write!(detail, "\n    {line}").unwrap();
    }
    check(train_set.len() == 60 && structured && b.is_finite() && b >= untrained_b, detail)
}

fn ablation_grid(dir: &Path) -> Outcome {
    let data_dir = dir.join("data");
    let out = dir.join("out");
    data::generate(&GenConfig { seed: 3, counts: [4, 2, 0], size: 64, paired: true }, &data_dir).map_err(err)?;
    let (d, o) = (path_str(&data_dir), path_str(&out));
    cli(&["ablate", "--data", d, "--rfin", "0,1,2,3", "--dkin", "1,3,6", "--out", o, "--epochs", "2"])?;
    let csv = fs::read_to_string(out.join("ablation.csv")).map_err(err)?;
    let table = fs::read_to_string(out.join("ablation.txt")).map_err(err)?;
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let cells: Vec<&str> = rows.iter().copied().filter(|r| !r.starts_with("0,0,")).collect();
    let ok = cells.iter().filter(|r| r.split(',').nth(2) == Some("ok")).count();
    let default_line = table.lines().find(|l| l.contains("<- default")).unwrap_or("");
    let cfg = ModelConfig::default();
    let default_is_33 = (cfg.rfin_count, cfg.dkin_count) == (3, 3)
        && default_line.split_whitespace().take(2).collect::<Vec<_>>() == ["3", "3"];
    check(
        cells.len() == 12 && ok == 12 && default_is_33,
        format!("{} grid cells at m=6, {ok} trained and scored; default row: `{}`", cells.len(), default_line.trim()),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let data_dir = dir.join("data");
    overfit_data(&data_dir)?;
    let cfg_path = dir.join("config.json");
    fs::write(&cfg_path, serde_json::to_string(&ModelConfig::default()).map_err(err)?).map_err(err)?;
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.join(format!("run{i}"))).collect();
    for run in &runs {
        cli(&[
            "train",
            "--data",
            path_str(&data_dir),
            "--out",
            path_str(run),
            "--config",
            path_str(&cfg_path),
            "--epochs",
            "3",
            "--seed",
            "17",
        ])?;
    }
    let mut names: Vec<String> = fs::read_dir(&runs[0])
        .map_err(err)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    names.sort();
    for name in &names {
        let a = fs::read(runs[0].join(name)).map_err(err)?;
        let b = fs::read(runs[1].join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
    }
    let second = fs::read_dir(&runs[1]).map_err(err)?.count();
    let log = training::read_loss_log(&runs[0].join("loss.csv")).map_err(err)?;
    check(
        second == names.len() && names.iter().any(|n| n == "loss.csv"),
        format!("{} files (loss log with {} rows, checkpoint tensors, meta) byte-identical", names.len(), log.len()),
    )
}

fn serialization(dir: &Path) -> Outcome {
    let cfg = ModelConfig::default();
    let (model, mut store) = MbaNet::init::<f32>(&cfg, 4).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05f32));
    }
    let ckpt = dir.join("ckpt");
    checkpoint::save(&ckpt, &cfg, 3, 4, &store).map_err(err)?;
    let (loaded_model, loaded, _) = checkpoint::load(&ckpt).map_err(err)?;
    let low = Tensor::from_fn([2, 1, cfg.x_c, cfg.x_c], |_| rng.gen_range(0.0..1.0f32));
    let high = Tensor::from_fn([2, 1, cfg.x_s, cfg.x_s], |_| rng.gen_range(0.0..1.0f32));
    let run = |m: &MbaNet, s: &mbanet::nn::ParamStore<f32>| -> mbanet::Result<Tensor<f32>> {
        let g = Graph::inference();
        let p = s.bind(&g);
        Ok(m.forward(&p, g.constant(high.clone()), g.constant(low.clone()))?.value().as_ref().clone())
    };
    if !run(&model, &store).map_err(err)?.bit_eq(&run(&loaded_model, &loaded).map_err(err)?) {
        return Err("forward after load differs".into());
    }
    let resaved = dir.join("resaved");
    checkpoint::save(&resaved, &cfg, 3, 4, &loaded).map_err(err)?;
    for entry in fs::read_dir(&ckpt).map_err(err)? {
        let name = entry.map_err(err)?.file_name();
        if fs::read(ckpt.join(&name)).map_err(err)? != fs::read(resaved.join(&name)).map_err(err)? {
            return Err(format!("{} differs after save -> load -> save", name.to_string_lossy()));
        }
    }

    let victim = "decoder.mask_token";
    let bin = ckpt.join(format!("{victim}.bin"));
    let bytes = fs::read(&bin).map_err(err)?;
    fs::write(&bin, &bytes[..bytes.len() - 3]).map_err(err)?;
    let corrupt = match checkpoint::load(&ckpt) {
        Err(Error::Checkpoint { tensor, .. }) => tensor,
        other => return Err(format!("truncated tensor gave {:?}", other.map(|_| ()))),
    };
    fs::write(&bin, &bytes).map_err(err)?;

    let other = ModelConfig { prior_dim: 48, ..cfg };
    let (_, mut wrong) = MbaNet::init::<f32>(&other, 4).map_err(err)?;
    let mismatch = match checkpoint::load_into(&ckpt, &mut wrong) {
        Err(Error::Checkpoint { tensor, detail }) => format!("{tensor} ({detail})"),
        other => return Err(format!("mismatched config gave {:?}", other.map(|_| ()))),
    };
    check(
        corrupt == victim,
        format!("forward bitwise equal, re-save byte-identical; truncated -> `{corrupt}`; mismatched -> `{mismatch}`"),
    )
}

fn schedule_and_optimizer(_: &Path) -> Outcome {
    let cfg = TrainConfig::default();
    let first = cfg.lr_at(0);
    let last = cfg.lr_at(cfg.epochs);
    let mid = LrSchedule::Poly.lr(3e-4, 25, 50, 0.9);
    let monotone = (1..=cfg.epochs).all(|e| cfg.lr_at(e) < cfg.lr_at(e - 1));

    let mut theta = vec![Tensor::<f64>::zeros([1])];
    let mut sgd = Sgd::new(SgdConfig { momentum: 0.99, weight_decay: 0.0 }, theta.iter());
    let grads = vec![Tensor::<f64>::ones([1])];
    sgd.step(theta.iter_mut(), &grads, 1.0).map_err(err)?;
    sgd.step(theta.iter_mut(), &grads, 1.0).map_err(err)?;
    let two_step = theta[0].item();

    let mut theta = vec![Tensor::<f64>::zeros([1])];
    let mut sgd = Sgd::new(SgdConfig { momentum: 0.99, weight_decay: 0.0 }, theta.iter());
    sgd.step(theta.iter_mut(), &grads, 0.1).map_err(err)?;
    let one_step = (theta[0].item(), sgd.velocity[0].item());

    check(
        first == 3e-4
            && last == 0.0
            && (mid - 1.6077e-4).abs() < 1e-8
            && monotone
            && (two_step + 2.99).abs() < SGD_TOL
            && (one_step.0 + 0.1).abs() < SGD_TOL
            && one_step.1 == 1.0,
        format!(
            "poly lr(0)={first:e}, lr({})={last:e}, lr(25)={mid:.4e}; two-step theta={two_step} (|err| {:.1e})",
            cfg.epochs,
            (two_step + 2.99).abs()
        ),
    )
}
