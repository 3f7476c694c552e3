//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line to
//! stderr (run with `--nocapture` to see them interleaved with test output)
//! and fails its test when the criterion is not met.
//!
//! The criteria run one at a time so that their runtime limits are measured
//! without competition from each other.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use changecnn::baselines::{
    difference_image, glrt, otsu_threshold, otsu_threshold_values, supervised_threshold, BaselineMethod,
    BaselineParams, VARIANCE_FLOOR,
};
use changecnn::dataset::{generate_synthetic, import_region, ChannelMode, ImagePair, PairStacks, RegionLayout, Stack};
use changecnn::inference::{gaussian_kernel, threshold_map, vote_map, PatchClassifier};
use changecnn::metrics::{confusion, report, Confusion, EvalReport};
use changecnn::models::{train, ArchKind, Architecture, ChangeModel, Network, PairLoss, TrainConfig};
use changecnn::nn::{grad_check, weighted_cross_entropy, ConvLayer, ConvSpec, DenseLayer, DenseSpec, GradCheckConfig, GradCheckTarget, Tensor};
use changecnn::patching::{
    class_weights, dihedral_transform, extract_patch_pair, AugmentationId, ClassWeights, Label, Padding, Patch,
};
use changecnn::PATCH_SIZE;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

static SERIAL: Mutex<()> = Mutex::new(());

type Outcome = Result<String, String>;

fn criterion(name: &str, limit: Option<Duration>, body: impl FnOnce() -> Outcome) {
    let _turn = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut outcome = body();
    let took = start.elapsed();
    if let (Ok(detail), Some(limit)) = (&outcome, limit) {
        if took > limit {
            outcome = Err(format!("{detail}; took {:.1} s, limit {} s", took.as_secs_f64(), limit.as_secs()));
        }
    }
    let line = match &outcome {
        Ok(detail) => format!("PASS  {name}: {detail} [{:.1} s]", took.as_secs_f64()),
        Err(detail) => format!("FAIL  {name}: {detail} [{:.1} s]", took.as_secs_f64()),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    if let Err(detail) = outcome {
        panic!("{name}: {detail}");
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.2}"))
}

#[test]
fn gradient_integrity() {
    criterion("gradient integrity", Some(Duration::from_secs(300)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut parts = Vec::new();
        for kind in [ArchKind::EarlyFusion, ArchKind::Siamese] {
            let net = Network::<f64>::new(Architecture::new(kind, 3).map_err(|e| e.to_string())?, 5).map_err(|e| e.to_string())?;
            let (a, b) = (uniform(&mut rng, 225 * 3), uniform(&mut rng, 225 * 3));
            let weights = ClassWeights { change: 1.8, no_change: 0.7 };
            let target = PairLoss::new(&net, a, b, Label::Change, weights).map_err(|e| e.to_string())?;
            let report = grad_check(&target, &GradCheckConfig::exhaustive()).map_err(|e| e.to_string())?;
            let total = net.params().len();
            ensure(report.checked() + report.excluded() == total, || {
                format!("{kind}: {} checked + {} excluded != {total} parameters", report.checked(), report.excluded())
            })?;
            ensure(report.passed(), || format!("{kind}: max relative error {:.3e}", report.max_relative_error()))?;
            parts.push(format!(
                "{kind} {} params, {} excluded at ReLU kinks, max rel err {:.2e}",
                total,
                report.excluded(),
                report.max_relative_error()
            ));
        }
        Ok(parts.join("; "))
    });
}

/// Quadruple-loop cross-correlation.
fn conv_oracle(x: &[f64], h: usize, w: usize, c: usize, kernel: &[f64], bias: &[f64], k: usize, o: usize) -> Vec<f64> {
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut out = Vec::with_capacity(ho * wo * o);
    for y in 0..ho {
        for xx in 0..wo {
            for oc in 0..o {
                let mut s = bias[oc];
                for dy in 0..k {
                    for dx in 0..k {
                        for ic in 0..c {
                            s += x[((y + dy) * w + xx + dx) * c + ic] * kernel[((dy * k + dx) * c + ic) * o + oc];
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    out
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Direct windowed GLRT with naive variances.
fn glrt_oracle(a: &Stack, b: &Stack, r: usize) -> Vec<f64> {
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).max(VARIANCE_FLOOR)
    };
    let mut out = Vec::new();
    for y in 0..a.height {
        for x in 0..a.width {
            let mut g = 0.0;
            for ch in 0..a.channels {
                let mut w1 = Vec::new();
                let mut w2 = Vec::new();
                for dy in -(r as isize)..=r as isize {
                    for dx in -(r as isize)..=r as isize {
                        let (yy, xx) = (reflect(y as isize + dy, a.height), reflect(x as isize + dx, a.width));
                        w1.push(a.get(yy, xx, ch) as f64);
                        w2.push(b.get(yy, xx, ch) as f64);
                    }
                }
                let n = w1.len() as f64;
                let both: Vec<f64> = w1.iter().chain(&w2).copied().collect();
                g += 2.0 * n * var(&both).ln() - n * var(&w1).ln() - n * var(&w2).ln();
            }
            out.push(g.max(0.0));
        }
    }
    out
}

/// Between-class variance of every split, recomputed from the raw values.
fn otsu_oracle(values: &[f64], bins: usize) -> (f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    let bin = |v: f64| (((v - min) / width).floor() as usize).min(bins - 1);
    let center = |i: usize| min + (i as f64 + 0.5) * width;
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for k in 0..bins - 1 {
        let low: Vec<f64> = values.iter().filter(|&&v| bin(v) <= k).map(|&v| center(bin(v))).collect();
        let high: Vec<f64> = values.iter().filter(|&&v| bin(v) > k).map(|&v| center(bin(v))).collect();
        if low.is_empty() || high.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let (m0, m1) = (low.iter().sum::<f64>() / low.len() as f64, high.iter().sum::<f64>() / high.len() as f64);
        let between = low.len() as f64 / n * (high.len() as f64 / n) * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, min + (k + 1) as f64 * width);
        }
    }
    best
}

fn between_at(values: &[f64], bins: usize, t: f64) -> f64 {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    let bin = |v: f64| (((v - min) / width).floor() as usize).min(bins - 1);
    let k = ((t - min) / width).round() as usize - 1;
    let center = |i: usize| min + (i as f64 + 0.5) * width;
    let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for &v in values {
        if bin(v) <= k {
            n0 += 1.0;
            s0 += center(bin(v));
        } else {
            n1 += 1.0;
            s1 += center(bin(v));
        }
    }
    let n = n0 + n1;
    n0 / n * (n1 / n) * (s0 / n0 - s1 / n1).powi(2)
}

/// Change probability from the mean brightness difference of a patch pair.
struct MeanShift;

impl MeanShift {
    fn p(earlier: &[f32], later: &[f32]) -> f64 {
        let d: f64 = later.iter().zip(earlier).map(|(&l, &e)| (l - e) as f64).sum::<f64>() / earlier.len() as f64;
        1.0 / (1.0 + (-d).exp())
    }
}

impl PatchClassifier for MeanShift {
    fn channels(&self) -> usize {
        2
    }

    fn classify(&self, earlier: &[f32], later: &[f32], n: usize) -> changecnn::Result<Vec<f64>> {
        let plane = PATCH_SIZE * PATCH_SIZE * 2;
        Ok((0..n).map(|i| Self::p(&earlier[i * plane..(i + 1) * plane], &later[i * plane..(i + 1) * plane])).collect())
    }
}

/// Double loop over pixels and patch centers.
fn vote_oracle(stacks: &PairStacks, stride: usize, sigma: f64) -> Vec<f64> {
    let (w, h) = (stacks.width(), stacks.height());
    let half = (PATCH_SIZE / 2) as isize;
    let axis = |len: usize| {
        let mut v: Vec<usize> = (0..len).step_by(stride).collect();
        if *v.last().unwrap() != len - 1 {
            v.push(len - 1);
        }
        v
    };
    let crop = |s: &Stack, cy: usize, cx: usize| {
        let mut out = Vec::new();
        for dy in -half..=half {
            for dx in -half..=half {
                for ch in 0..s.channels {
                    out.push(s.get(reflect(cy as isize + dy, h), reflect(cx as isize + dx, w), ch));
                }
            }
        }
        out
    };
    let mut centers = Vec::new();
    for cy in axis(h) {
        for cx in axis(w) {
            centers.push((cy, cx, MeanShift::p(&crop(&stacks.earlier, cy, cx), &crop(&stacks.later, cy, cx))));
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (mut num, mut den) = (0.0, 0.0);
            for &(cy, cx, p) in &centers {
                let (dy, dx) = (y as f64 - cy as f64, x as f64 - cx as f64);
                if dy.abs() > half as f64 || dx.abs() > half as f64 {
                    continue;
                }
                let wgt = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
                num += p * wgt;
                den += wgt;
            }
            out.push(num / den);
        }
    }
    out
}

fn random_stack(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize, scale: f32) -> Stack {
    Stack::new(w, h, c, (0..w * h * c).map(|_| rng.gen_range(0.0..scale).round()).collect()).unwrap()
}

#[test]
fn kernel_oracles() {
    const INSTANCES: usize = 100;
    criterion("kernel oracle equivalence", Some(Duration::from_secs(120)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let err = |e: changecnn::Error| e.to_string();

        for i in 0..INSTANCES {
            let k = [1, 3, 5][rng.gen_range(0..3)];
            let (h, w) = (rng.gen_range(k..k + 6), rng.gen_range(k..k + 6));
            let (c, o) = (rng.gen_range(1..4), rng.gen_range(1..5));
            let spec = ConvSpec::new(k, c, o).map_err(err)?;
            let (x, kernel, bias) = (uniform(&mut rng, h * w * c), uniform(&mut rng, spec.kernel_len()), uniform(&mut rng, o));
            let layer = ConvLayer::new(spec, kernel.clone(), bias.clone()).map_err(err)?;
            let got = layer.forward(&Tensor::new(vec![h, w, c], x.clone()).map_err(err)?).map_err(err)?;
            let want = conv_oracle(&x, h, w, c, &kernel, &bias, k, o);
            ensure(got.data().len() == want.len() && got.data().iter().zip(&want).all(|(&g, &r)| close(g, r, 1e-6)), || {
                format!("conv instance {i} ({h}x{w}x{c}, k {k}, {o} out) differs")
            })?;
        }

        for i in 0..INSTANCES {
            let (n_in, n_out) = (rng.gen_range(1..40), rng.gen_range(1..10));
            let (x, wts, bias) = (uniform(&mut rng, n_in), uniform(&mut rng, n_in * n_out), uniform(&mut rng, n_out));
            let layer = DenseLayer::new(DenseSpec::new(n_in, n_out).map_err(err)?, wts.clone(), bias.clone()).map_err(err)?;
            let got = layer.forward(&x).map_err(err)?;
            let want: Vec<f64> = (0..n_out).map(|o| bias[o] + (0..n_in).map(|j| x[j] * wts[j * n_out + o]).sum::<f64>()).collect();
            ensure(got.iter().zip(&want).all(|(&g, &r)| close(g, r, 1e-6)), || format!("dense instance {i} ({n_in}->{n_out}) differs"))?;
        }

        for i in 0..INSTANCES {
            let (c, r) = if i < INSTANCES / 2 { (1, 1) } else { (rng.gen_range(1..4), rng.gen_range(1..3)) };
            let a = random_stack(&mut rng, 8, 8, c, 500.0);
            let b = random_stack(&mut rng, 8, 8, c, 500.0);
            let got = glrt(&PairStacks::new(a.clone(), b.clone()).map_err(err)?, r).map_err(err)?;
            let want = glrt_oracle(&a, &b, r);
            ensure(got.values.iter().zip(&want).all(|(&g, &o)| close(g, o, 1e-6)), || {
                format!("GLRT instance {i} ({c} channels, r {r}) differs")
            })?;
        }

        let mut otsu_ties = 0;
        for i in 0..INSTANCES {
            let n = rng.gen_range(20..400);
            let bins = rng.gen_range(2..64);
            let split = rng.gen_range(0.2..0.8);
            let values: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(split) { rng.gen_range(0.0..4.0) } else { rng.gen_range(3.0..10.0) })
                .collect();
            let got = otsu_threshold_values(&values, bins).map_err(err)?;
            let (best, want) = otsu_oracle(&values, bins);
            if got != want {
                // Only a floating-point tie between two splits may disagree.
                ensure(close(between_at(&values, bins, got), best, 1e-12), || {
                    format!("Otsu instance {i}: threshold {got} but the oracle found {want}")
                })?;
                otsu_ties += 1;
            }
        }

        for i in 0..INSTANCES {
            let (w, h) = (rng.gen_range(16..25), rng.gen_range(16..25));
            let stride = rng.gen_range(1..6);
            let sigma = rng.gen_range(0.5..4.0);
            let stacks = PairStacks::new(random_stack(&mut rng, w, h, 2, 4.0), random_stack(&mut rng, w, h, 2, 4.0)).map_err(err)?;
            let got = vote_map(&MeanShift, &stacks, stride, &gaussian_kernel(PATCH_SIZE, sigma).map_err(err)?).map_err(err)?;
            let want = vote_oracle(&stacks, stride, sigma);
            ensure(got.values.iter().zip(&want).all(|(&g, &o)| (g - o).abs() <= 1e-9), || {
                format!("vote_map instance {i} ({w}x{h}, stride {stride}, sigma {sigma:.2}) differs")
            })?;
        }
        Ok(format!(
            "{INSTANCES} instances each of conv2d, dense (1e-6), GLRT (1e-6), Otsu (exact, {otsu_ties} float ties), vote_map (1e-9)"
        ))
    });
}

#[test]
fn voting_identity() {
    criterion("voting identity", None, || {
        let err = |e: changecnn::Error| e.to_string();
        let pair = generate_synthetic(42, 1, 40, 3).map_err(err)?.remove(0);
        let config = TrainConfig { epochs: 1, center_stride: 4, ..TrainConfig::default() };
        let (model, _) = train(std::slice::from_ref(&pair), &config).map_err(err)?;
        let stacks = model.prepare(&pair).map_err(err)?;
        let map = vote_map(&model, &stacks, 1, &gaussian_kernel(PATCH_SIZE, 0.0).map_err(err)?).map_err(err)?;
        let mut mismatches = 0;
        for y in 0..40 {
            for x in 0..40 {
                let patches = extract_patch_pair(&stacks, None, (y, x), Padding::Mirror).map_err(err)?;
                let p = model.network.predict(&patches.earlier.data, &patches.later.data, 1).map_err(err)?[1] as f64;
                if p.to_bits() != map.get(y, x).to_bits() {
                    mismatches += 1;
                }
            }
        }
        ensure(mismatches == 0, || format!("{mismatches} of 1600 pixels differ from dense classification"))?;
        Ok("stride 1 with the delta kernel equals per-pixel classification on all 1600 pixels, bitwise".into())
    });
}

#[test]
fn augmentation_group_laws() {
    criterion("augmentation group laws", None, || {
        let probe = Patch { size: 3, channels: 1, data: (0..9).map(|v| v as f32).collect() };
        let ids: Vec<AugmentationId> = AugmentationId::all().collect();
        let images: Vec<Patch> = ids.iter().map(|&id| dihedral_transform(&probe, id)).collect();
        for i in 0..8 {
            for j in 0..i {
                ensure(images[i] != images[j], || format!("transforms {i} and {j} coincide"))?;
            }
        }
        for &a in &ids {
            let mut inverses = 0;
            for &b in &ids {
                let composed = dihedral_transform(&dihedral_transform(&probe, a), b);
                let member = images.iter().position(|p| *p == composed);
                ensure(member.is_some(), || format!("{} then {} leaves the set", a.id(), b.id()))?;
                ensure(composed == images[a.then(b).id() as usize], || {
                    format!("{} then {} is not transform {}", a.id(), b.id(), a.then(b).id())
                })?;
                if composed == probe {
                    inverses += 1;
                    ensure(b == a.inverse(), || format!("inverse of {} is {}, not {}", a.id(), b.id(), a.inverse().id()))?;
                }
            }
            ensure(inverses == 1, || format!("transform {} has {inverses} inverses", a.id()))?;
        }
        Ok("8 distinct transforms, closed under all 64 compositions, each with one inverse".into())
    });
}

#[test]
fn class_weight_identity() {
    criterion("class-weight identity", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let scale = 10u64.pow(rng.gen_range(0..10));
            let (nc, nn) = (rng.gen_range(1..=scale * 10), rng.gen_range(1..=scale * 10));
            let w = class_weights(nc, nn).map_err(|e| e.to_string())?;
            let (a, b) = (w.change * nc as f64, w.no_change * nn as f64);
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
        }
        ensure(worst <= 1e-9, || format!("worst relative gap {worst:.3e}"))?;
        Ok(format!("1000 random count pairs, worst relative gap {worst:.2e}"))
    });
}

#[test]
fn siamese_sharing() {
    criterion("Siamese sharing", None, || {
        let err = |e: changecnn::Error| e.to_string();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let net = Network::<f64>::new(Architecture::new(ArchKind::Siamese, 3).map_err(err)?, 3).map_err(err)?;
        let (a, b) = (uniform(&mut rng, 225 * 3), uniform(&mut rng, 225 * 3));
        let features = |n: &Network<f64>| Ok::<_, String>((n.trunk_features(&a, 1).map_err(err)?, n.trunk_features(&b, 1).map_err(err)?));
        let weights = ClassWeights { change: 2.0, no_change: 0.6 };
        let target = PairLoss::new(&net, a.clone(), b.clone(), Label::NoChange, weights).map_err(err)?;
        let (_, grads) = target.loss_and_gradient().map_err(err)?;
        let loss = |n: &Network<f64>| -> Result<f64, String> {
            let p = n.predict(&a, &b, 1).map_err(err)?;
            Ok(weighted_cross_entropy(&p, Label::NoChange, &weights).0)
        };
        let (fa, fb) = features(&net)?;
        let trunk_ids: Vec<_> = net.trunk().iter().flat_map(|l| l.param_ids()).collect();
        let h = 1e-5;
        let (mut checked, mut worst) = (0, 0.0f64);
        for &id in &trunk_ids {
            let len = net.params().slot(id).len;
            let mut moved = net.clone();
            moved.params_mut().get_mut(id).iter_mut().for_each(|v| *v += 1e-2);
            let (ga, gb) = features(&moved)?;
            ensure(ga != fa && gb != fb, || format!("{} does not reach both branches", net.params().slot(id).name))?;
            for _ in 0..8 {
                let i = rng.gen_range(0..len);

                if target.probe(id, &[i], h).map_err(err)?[0].crossed_kink {
                    continue;
                }
                let mut plus = net.clone();
                plus.params_mut().get_mut(id)[i] += h;
                let mut minus = net.clone();
                minus.params_mut().get_mut(id)[i] -= h;
                let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
                let analytic = grads[net.params().range(id).start + i];
                let rel = changecnn::nn::relative_error(analytic, numeric);
                worst = worst.max(rel);
                checked += 1;
                ensure(rel < 1e-4, || format!("{} [{i}]: analytic {analytic:.6e}, both-branch numeric {numeric:.6e}", net.params().slot(id).name))?;
            }
        }
        Ok(format!(
            "every trunk tensor moves both branches; {checked} shared gradients match both-branch differences, max rel err {worst:.2e}"
        ))
    });
}

struct EndToEnd {
    seconds: f64,
    cnn: Vec<(ArchKind, Confusion)>,
    baselines: Vec<(String, Confusion)>,
}

fn pooled(pairs: &[ImagePair], predict: impl Fn(&ImagePair) -> changecnn::Result<changecnn::dataset::BinaryMap>) -> changecnn::Result<Confusion> {
    let mut c = Confusion::default();
    for p in pairs {
        c += confusion(&predict(p)?, p.ground_truth.as_ref().expect("synthetic regions are labelled"))?;
    }
    Ok(c)
}

fn end_to_end() -> &'static Result<EndToEnd, String> {
    static RUN: OnceLock<Result<EndToEnd, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let err = |e: changecnn::Error| e.to_string();
        let data = generate_synthetic(42, 8, 128, 3).map_err(err)?;
        let (train_set, test_set) = data.split_at(6);
        let start = Instant::now();
        let kernel = gaussian_kernel(PATCH_SIZE, 3.0).map_err(err)?;
        let mut cnn = Vec::new();
        for arch in [ArchKind::EarlyFusion, ArchKind::Siamese] {
            let (model, _) = train(train_set, &TrainConfig { arch, ..TrainConfig::default() }).map_err(err)?;
            let infer = |m: &ChangeModel, p: &ImagePair| threshold_map(&vote_map(m, &m.prepare(p)?, 3, &kernel)?, 0.5);
            cnn.push((arch, pooled(test_set, |p| infer(&model, p)).map_err(err)?));
        }
        let seconds = start.elapsed().as_secs_f64();

        let params = BaselineParams::default();
        let mut baselines = Vec::new();
        for method in BaselineMethod::ALL {
            let diff = |p: &ImagePair| difference_image(method, &p.stacks(ChannelMode::C3)?, &params);
            let otsu = pooled(test_set, |p| {
                let d = diff(p)?;
                Ok(d.threshold(otsu_threshold(&d, 256)?))
            })
            .map_err(err)?;
            baselines.push((format!("{method}/otsu"), otsu));
            let fit: Vec<_> = train_set
                .iter()
                .map(|p| Ok((diff(p)?, p.ground_truth.clone().expect("labelled"))))
                .collect::<changecnn::Result<_>>()
                .map_err(err)?;
            let t = supervised_threshold(&fit.iter().map(|(d, g)| (d, g)).collect::<Vec<_>>()).map_err(err)?;
            baselines.push((format!("{method}/supervised"), pooled(test_set, |p| Ok(diff(p)?.threshold(t))).map_err(err)?));
        }
        Ok(EndToEnd { seconds, cnn, baselines })
    })
}

fn mean_class(r: &EvalReport) -> f64 {
    r.mean_class_accuracy().unwrap_or(f64::NAN)
}

#[test]
fn synthetic_end_to_end() {
    criterion("synthetic end-to-end", None, || {
        let run = end_to_end().as_ref().map_err(Clone::clone)?;
        let mut parts = Vec::new();
        let mut failures = Vec::new();
        for (arch, c) in &run.cnn {
            let r = report(c);
            let fp_rate = 100.0 * c.fp_no_change as f64 / c.no_change_pixels() as f64;
            parts.push(format!(
                "{arch} change {} / no-change {} (unchanged-but-shifted false positives {fp_rate:.2}%)",
                pct(r.change_accuracy),
                pct(r.no_change_accuracy)
            ));
            if !(r.change_accuracy >= Some(90.0) && r.no_change_accuracy >= Some(90.0) && fp_rate < 10.0) {
                failures.push(arch.to_string());
            }
        }
        let detail = format!("{}; training and inference {:.0} s", parts.join("; "), run.seconds);
        ensure(failures.is_empty(), || format!("{detail}; below 90/90 or 10% false positives: {}", failures.join(", ")))?;
        ensure(run.seconds < 900.0, || format!("{detail}; limit 900 s"))?;
        Ok(detail)
    });
}

#[test]
fn baseline_ordering() {
    criterion("baseline ordering", None, || {
        let run = end_to_end().as_ref().map_err(Clone::clone)?;
        let (best_name, best) = run
            .baselines
            .iter()
            .map(|(n, c)| (n, mean_class(&report(c))))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or("no baselines")?;
        let (arch, top) = run
            .cnn
            .iter()
            .map(|(a, c)| (*a, mean_class(&report(c))))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or("no networks")?;
        let detail = format!("best CNN {arch} {top:.2} vs best baseline {best_name} {best:.2} (mean per-class accuracy)");
        ensure(top > best, || detail.clone())?;
        Ok(detail)
    });
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_changecnn")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn same_bytes(a: &Path, b: &Path) -> Result<bool, String> {
    Ok(std::fs::read(a).map_err(|e| e.to_string())? == std::fs::read(b).map_err(|e| e.to_string())?)
}

#[test]
fn determinism() {
    criterion("determinism", None, || {
        let tmp = TempDir::new().map_err(|e| e.to_string())?;
        let dir = |name: &str| tmp.path().join(name);
        let s = |p: &PathBuf| p.to_str().expect("utf-8 temp path").to_string();
        let data = dir("data");
        cli(&["synth", "--n", "3", "--n-test", "1", "--size", "48", "--out", &s(&data)])?;
        let region = s(&data.join("synth_002"));
        for arch in ["ef", "siam"] {
            let (m1, m2) = (dir(&format!("{arch}1")), dir(&format!("{arch}2")));
            for m in [&m1, &m2] {
                cli(&["train", &s(&data), "--arch", arch, "--epochs", "2", "--center-stride", "4", "--out", &s(m)])?;
            }
            ensure(same_bytes(&m1.join("model.bin"), &m2.join("model.bin"))?, || format!("{arch} model files differ"))?;
            let (i1, i2) = (dir(&format!("{arch}i1")), dir(&format!("{arch}i2")));
            for (m, i) in [(&m1, &i1), (&m2, &i2)] {
                cli(&["infer", &s(&m.join("model.bin")), &region, "--out", &s(i)])?;
            }
            for f in ["probability.pgm", "change.pgm"] {
                ensure(same_bytes(&i1.join(f), &i2.join(f))?, || format!("{arch} {f} differs"))?;
            }
        }
        Ok("repeated train and infer runs give identical model files and maps for ef and siam".into())
    });
}

/// EF 13-channel row: change 84.69, no change 88.33.
const REFERENCE_EF13_MEAN_CLASS: f64 = (84.69 + 88.33) / 2.0;

/// Informative only: runs when `CHANGECNN_OSCD` names a converted dataset
/// with `train.txt` and `test.txt`.
#[test]
fn oscd_reference() {
    let Some(root) = std::env::var_os("CHANGECNN_OSCD").map(PathBuf::from) else {
        let _ = writeln!(std::io::stderr(), "SKIP  OSCD reference (informative): set CHANGECNN_OSCD to a converted dataset");
        return;
    };
    let _turn = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let load = |split: &str| -> Vec<ImagePair> {
        let text = std::fs::read_to_string(root.join(split)).expect("split file");
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|id| !id.is_empty())
            .map(|id| import_region(&root.join(id), &RegionLayout::default()).expect("region"))
            .collect()
    };
    let (train_set, test_set) = (load("train.txt"), load("test.txt"));
    let config = TrainConfig { channels: ChannelMode::C13, ..TrainConfig::default() };
    let (model, _) = train(&train_set, &config).expect("training");
    let kernel = gaussian_kernel(PATCH_SIZE, 3.0).unwrap();
    let c = pooled(&test_set, |p| threshold_map(&vote_map(&model, &model.prepare(p)?, 3, &kernel)?, 0.5)).unwrap();
    let m = mean_class(&report(&c));
    let verdict = if (m - REFERENCE_EF13_MEAN_CLASS).abs() <= 7.0 { "WITHIN" } else { "OUTSIDE" };
    let _ = writeln!(
        std::io::stderr(),
        "INFO  OSCD reference (informative): EF-13 mean per-class {m:.2}, {verdict} ±7 of {REFERENCE_EF13_MEAN_CLASS:.2}"
    );
}
