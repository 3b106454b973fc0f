//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{HashMap, HashSet, VecDeque};
use std::time::Instant;

use common::*;
use rand::Rng;
use rtqe::analysis::{detect_code_switch, detect_failed_forward, pearson_r};
use rtqe::embedding::{cosine_similarity, EmbeddingVector};
use rtqe::metrics::{
    bleu_stats, chrf, sentence_bleu, ter, tf_cosine, BleuConfig, ChrfConfig, Smoothing,
};
use rtqe::pipeline::{self, run_pipeline};
use rtqe::text::{remove_stopwords, term_vectors, tokenize, Scheme, TokenSequence};

type Check = Result<String, String>;
type Criterion = fn() -> Check;

fn tf_cosine_golden() -> Check {
    let rows = [
        ("the boys love football", "the guys love sport", 0.333),
        ("the phone is broken", "this iphone is smashed", 0.000),
        ("it took too long to arrive", "the delivery was late", 0.000),
    ];
    let mut got = Vec::new();
    for (a, b, want) in rows {
        let v = tf_cosine(a, b).value;
        got.push(format!("{v:.3}"));
        if (v - want).abs() > 1e-3 {
            return Err(format!("`{a}` / `{b}`: got {v}, want {want}"));
        }
    }
    Ok(got.join(", "))
}

fn term_vector_example() -> Check {
    let a = remove_stopwords(&tokenize("the phone is broken", Scheme::Simple));
    let b = remove_stopwords(&tokenize("this iphone is smashed", Scheme::Simple));
    let tv = term_vectors(&a, &b);
    let cos = tf_cosine("the phone is broken", "this iphone is smashed").value;
    let ok = tv.vocabulary == ["phone", "broken", "iphone", "smashed"]
        && tv.counts_a == [1, 1, 0, 0]
        && tv.counts_b == [0, 0, 1, 1]
        && cos == 0.0;
    let detail = format!("{:?} {:?}/{:?}, cosine {cos}", tv.vocabulary, tv.counts_a, tv.counts_b);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cosine_endpoints() -> Check {
    let v = |xs: &[f64]| EmbeddingVector::new(xs.to_vec(), "t").unwrap();
    let cases = [
        ("identical", v(&[0.3, -1.2, 4.5, 2.0]), v(&[0.3, -1.2, 4.5, 2.0]), 1.0),
        ("orthogonal", v(&[1.0, 2.0, 0.0, 0.0]), v(&[-2.0, 1.0, 0.0, 3.0]), 0.0),
        ("opposed", v(&[0.3, -1.2, 4.5, 2.0]), v(&[-0.3, 1.2, -4.5, -2.0]), -1.0),
    ];
    let mut worst: f64 = 0.0;
    for (name, a, b, want) in &cases {
        let got = cosine_similarity(a, b).map_err(|e| format!("{name}: {e}"))?.value;
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 1e-9 {
            return Err(format!("{name}: got {got}, want {want}"));
        }
    }
    // random vectors against themselves, positive multiples and negatives
    let mut rng = rng(31);
    for _ in 0..1000 {
        let dim = rng.gen_range(1..=64);
        let xs: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let a = v(&xs);
        let k = rng.gen_range(0.01..100.0);
        for (b, want) in [(a.scaled(k).unwrap(), 1.0), (a.scaled(-k).unwrap(), -1.0)] {
            let got = cosine_similarity(&a, &b).unwrap().value;
            worst = worst.max((got - want).abs());
            if (got - want).abs() > 1e-9 {
                return Err(format!("dim {dim}, k {k}: got {got}, want {want}"));
            }
        }
    }
    Ok(format!("max deviation {worst:e}"))
}

fn identity_suite() -> Check {
    let mut rng = rng(41);
    let mut worst: [f64; 4] = [0.0; 4];
    for _ in 0..1000 {
        let s = random_sentence(&mut rng);
        let toks = tokenize(&s, Scheme::Simple);
        let got = [
            sentence_bleu(&toks, &toks, &BleuConfig::default()).value,
            chrf(&s, &s, &ChrfConfig::default()).value,
            ter(&toks, &toks).value,
            tf_cosine(&s, &s).value,
        ];
        let want = [100.0, 100.0, 0.0, 1.0];
        for i in 0..4 {
            worst[i] = worst[i].max((got[i] - want[i]).abs());
        }
        if got != want {
            return Err(format!("`{s}`: bleu/chrf/ter/tf_cosine = {got:?}"));
        }
    }
    Ok(format!("1000 sentences, max deviations {worst:?}"))
}

/// Every sequence of length 0..=6 over a 3-symbol alphabet.
fn all_sequences() -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..6 {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..3u8 {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn as_tokens(s: &[u8]) -> TokenSequence {
    TokenSequence::from_tokens(s.iter().map(|c| ((b'a' + c) as char).to_string()), Scheme::Simple)
}

/// Clipped matches and totals by comparing every window with every window.
fn brute_force_counts(hyp: &[u8], reference: &[u8], n: usize) -> (u64, u64) {
    if hyp.len() < n {
        return (0, 0);
    }
    let hw: Vec<&[u8]> = hyp.windows(n).collect();
    let rw: Vec<&[u8]> = if reference.len() >= n { reference.windows(n).collect() } else { Vec::new() };
    let mut seen: Vec<&[u8]> = Vec::new();
    let mut matches = 0;
    for g in &hw {
        if seen.contains(g) {
            continue;
        }
        seen.push(g);
        let in_hyp = hw.iter().filter(|w| *w == g).count();
        let in_ref = rw.iter().filter(|w| *w == g).count();
        matches += in_hyp.min(in_ref) as u64;
    }
    (matches, hw.len() as u64)
}

fn brute_force_bleu(hyp: &[u8], reference: &[u8], cfg: &BleuConfig) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=cfg.max_n {
        let (mut m, mut t) = brute_force_counts(hyp, reference, n);
        if n >= 2 && cfg.smoothing == Smoothing::AddOneHigherOrder {
            m += 1;
            t += 1;
        }
        if m == 0 {
            return 0.0;
        }
        product *= m as f64 / t as f64;
    }
    let bp = if hyp.len() >= reference.len() { 1.0 } else { (1.0 - reference.len() as f64 / hyp.len() as f64).exp() };
    100.0 * bp * product.powf(1.0 / cfg.max_n as f64)
}

fn bleu_oracle() -> Result<(usize, f64), String> {
    let seqs = all_sequences();
    let toks: Vec<TokenSequence> = seqs.iter().map(|s| as_tokens(s)).collect();
    let configs = [
        BleuConfig::default(),
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::None,
        },
    ];
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (h, th) in seqs.iter().zip(&toks) {
        for (r, tr) in seqs.iter().zip(&toks) {
            pairs += 1;
            let stats = bleu_stats(th.tokens(), tr.tokens(), 4);
            for n in 1..=4 {
                let (m, t) = brute_force_counts(h, r, n);
                if (stats.matches[n - 1], stats.totals[n - 1]) != (m, t) {
                    return Err(format!("{h:?} vs {r:?} order {n}: counts {:?} vs oracle {:?}", (stats.matches[n - 1], stats.totals[n - 1]), (m, t)));
                }
            }
            for cfg in &configs {
                let got = sentence_bleu(th, tr, cfg).value;
                let want = brute_force_bleu(h, r, cfg);
                worst = worst.max((got - want).abs());
                if (got - want).abs() > 1e-9 {
                    return Err(format!("{h:?} vs {r:?} {cfg:?}: {got} vs oracle {want}"));
                }
            }
        }
    }
    Ok((pairs, worst))
}

fn edit_distance(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    d[0] = (0..=b.len()).collect();
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Every arrangement reachable from `s` by block moves, with the fewest
/// moves needed to reach it.
fn shift_closure(s: &[u8]) -> Vec<(Vec<u8>, usize)> {
    let mut depth: HashMap<Vec<u8>, usize> = HashMap::new();
    depth.insert(s.to_vec(), 0);
    let mut queue = VecDeque::from([s.to_vec()]);
    while let Some(cur) = queue.pop_front() {
        let d = depth[&cur];
        let n = cur.len();
        for len in 1..n {
            for start in 0..=n - len {
                let mut rest = cur.clone();
                let block: Vec<u8> = rest.drain(start..start + len).collect();
                for dest in 0..=rest.len() {
                    let mut next = rest.clone();
                    next.splice(dest..dest, block.iter().copied());
                    if !depth.contains_key(&next) {
                        depth.insert(next.clone(), d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    depth.into_iter().collect()
}

/// Relabels symbols by first appearance across both sequences.
fn canonical(h: &[u8], r: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut map = [u8::MAX; 3];
    let mut next = 0;
    let mut relabel = |s: &[u8]| -> Vec<u8> {
        s.iter()
            .map(|&c| {
                if map[c as usize] == u8::MAX {
                    map[c as usize] = next;
                    next += 1;
                }
                map[c as usize]
            })
            .collect()
    };
    let a = relabel(h);
    let b = relabel(r);
    (a, b)
}

fn ter_oracle() -> Result<(usize, usize), String> {
    let seqs = all_sequences();
    let mut instances: HashSet<(Vec<u8>, Vec<u8>)> = HashSet::new();
    for h in &seqs {
        for r in seqs.iter().filter(|r| !r.is_empty()) {
            instances.insert(canonical(h, r));
        }
    }
    let mut closures: HashMap<Vec<u8>, Vec<(Vec<u8>, usize)>> = HashMap::new();
    let mut strict = 0;
    for (h, r) in &instances {
        let closure = closures.entry(h.clone()).or_insert_with(|| shift_closure(h));
        let plain = edit_distance(h, r);
        let optimum = closure.iter().map(|(arr, d)| d + edit_distance(arr, r)).min().unwrap();
        let got = ter(&as_tokens(h), &as_tokens(r)).value;
        let len = r.len() as f64;
        let (lo, hi) = (optimum as f64 / len, plain as f64 / len);
        if got < lo - 1e-12 || got > hi + 1e-12 {
            return Err(format!("{h:?} vs {r:?}: ter {got} outside [{lo}, {hi}]"));
        }
        if got > lo + 1e-12 {
            strict += 1;
        }
    }
    Ok((instances.len(), strict))
}

fn pearson_oracle() -> Check {
    let mut rng = rng(51);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(3..=200);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| rng.gen_range(-1.0..1.0) * 3.0 + v * rng.gen_range(-1.0..1.0)).collect();
        let nf = n as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let direct = (nf * sxy - sx * sy) / ((nf * sxx - sx * sx).sqrt() * (nf * syy - sy * sy).sqrt());
        let got = pearson_r(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max((got - direct).abs());
        if (got - direct).abs() > 1e-12 {
            return Err(format!("n {n}: {got} vs direct {direct}"));
        }
    }
    Ok(format!("1000 series, max deviation {worst:e}"))
}

fn oracle_equivalence() -> Check {
    let (bleu_pairs, bleu_dev) = bleu_oracle()?;
    let (ter_instances, strict) = ter_oracle()?;
    let pearson = pearson_oracle()?;
    Ok(format!(
        "bleu {bleu_pairs} pairs x 2 smoothings (max deviation {bleu_dev:e}); ter {ter_instances} canonical instances within bounds ({strict} above optimum); pearson {pearson}"
    ))
}

fn detector_suite() -> Check {
    let mut rng = rng(61);
    for _ in 0..1000 {
        let s = random_sentence(&mut rng);
        let (flag, bleu) = detect_failed_forward(&s, &s);
        if !flag {
            return Err(format!("copy `{s}` not flagged (bleu {bleu})"));
        }
        if detect_code_switch(&s).0 {
            return Err(format!("all-Latin `{s}` flagged as code-switched"));
        }
    }
    let mixed = "Monkeys in chorus cry; Tigers and leopards roar 猿狖群嘯兮虎豹原.";
    let (cs, scripts) = detect_code_switch(mixed);
    if !cs {
        return Err(format!("mixed sentence not flagged ({scripts:?})"));
    }
    for latin in ["Größere Straßen führen über die Brücke.", "Déjà vu, naïve café.", "José Ortega y Gasset visited Husserl at Freiburg in 1934."] {
        if detect_code_switch(latin).0 {
            return Err(format!("all-Latin `{latin}` flagged"));
        }
    }
    Ok(format!("1000 copies flagged; mixed sentence scripts {scripts:?}"))
}

fn end_to_end_identity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = identity_setup(dir.path(), &copied_rows(1000, 71));
    let t = Instant::now();
    let m = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let out = out_dir(&cfg);

    let scores = read(&out, pipeline::SCORES_FILE);
    let embed: Vec<f64> = scores
        .lines()
        .skip(1)
        .filter(|l| l.contains("\tembed_cosine:const\t"))
        .map(|l| l.rsplit('\t').next().unwrap().parse().unwrap())
        .collect();
    if embed.len() != 1000 || embed.iter().any(|v| *v != 1.0) {
        return Err(format!("{} embed_cosine rows, not all 1.0", embed.len()));
    }
    let flags = read(&out, pipeline::FLAGS_FILE);
    let flagged = flags.lines().skip(1).filter(|l| l.split('\t').nth(1) == Some("true")).count();
    if flagged != 1000 {
        return Err(format!("{flagged}/1000 flagged failed_forward"));
    }
    let json: serde_json::Value =
        serde_json::from_str(&read(&out, pipeline::CORRELATION_JSON)).map_err(|e| e.to_string())?;
    let per_metric = json["per_metric"].as_object().ok_or("per_metric missing")?;
    if per_metric.len() != 5 || per_metric.values().any(|v| !v.is_null()) {
        return Err(format!("constant columns should be undefined: {per_metric:?}"));
    }
    let tsv = read(&out, pipeline::CORRELATION_TSV);
    let rows = tsv.lines().count();
    if rows != 7 || !tsv.lines().skip(1).all(|l| l.contains("NA")) {
        return Err(format!("correlation.tsv malformed:\n{tsv}"));
    }
    if !m.completed || m.outputs.iter().any(|f| !out.join(f).is_file()) {
        return Err("manifest incomplete or lists missing files".into());
    }
    if elapsed.as_secs_f64() >= 10.0 {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("1000 records in {:.2}s, all embed_cosine 1.0, all flagged, 5 undefined correlations", elapsed.as_secs_f64()))
}

fn determinism() -> Check {
    let rows = copied_rows(300, 81);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (identity_setup(a.path(), &rows), identity_setup(b.path(), &rows));
    run_pipeline(&ca).map_err(|e| e.to_string())?;
    run_pipeline(&cb).map_err(|e| e.to_string())?;
    let files = [
        pipeline::SCORES_FILE,
        pipeline::FLAGS_FILE,
        pipeline::ROUNDTRIP_FILE,
        pipeline::CORRELATION_JSON,
        pipeline::CORRELATION_TSV,
        pipeline::Z_SCORES_FILE,
        pipeline::DIST_FAILED_FORWARD,
        pipeline::DIST_CODE_SWITCHED,
        pipeline::DISTRIBUTIONS_JSON,
        pipeline::INSPECTION_FILE,
        pipeline::REPORT_FILE,
    ];
    for f in files {
        let x = std::fs::read(out_dir(&ca).join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(out_dir(&cb).join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            return Err(format!("{f} differs"));
        }
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("tf_cosine golden pairs", tf_cosine_golden),
        ("term-vector worked example", term_vector_example),
        ("cosine endpoints", cosine_endpoints),
        ("metric identity suite", identity_suite),
        ("oracle equivalence", oracle_equivalence),
        ("detector suite", detector_suite),
        ("end-to-end identity run", end_to_end_identity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {name}: {detail} [{:.2}s]", t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
