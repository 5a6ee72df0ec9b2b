//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The live smoke criterion runs only when `DSG_LIVE_BACKEND_CONFIG` names a
//! backend config file and `DSG_LIVE_MANIFEST` names a manifest.
//! `DSG_LIVE_BACKEND` picks the backend id when the config holds several.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dsg::eval::{aggregate_runs, exact_match_accuracy, graded_accuracy, load_manifest, DatasetManifest};
use dsg::extraction::{load_canonical_schema, BUNDLED_SCHEMAS};
use dsg::gateway::{BackendHandle, ImageRef, MediaType, ScriptedBackend};
use dsg::grounding::{ground, GroundingConfig, GroundingStrategy};
use dsg::qa::{build_augmented_prompt, AnswerMode, Category, Prediction, QuestionType, VqaInstance};
use dsg::schema::{parse_schema, render_schema, topological_order, ComponentId, ComponentNode, SchemaProgram};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURE_BUDGET: Duration = Duration::from_secs(1);
const PROPERTY_BUDGET: Duration = Duration::from_secs(10);
const PROPERTY_PROGRAMS: usize = 1000;
const PROPERTY_SEED: u64 = 0x005e_ed0f_da65;
const METRIC_TOL: f64 = 1e-9;
const AGGREGATE_TOL: f64 = 1e-6;
const DETERMINISM_REPEATS: usize = 3;
const LIVE_INSTANCES: usize = 5;
const LIVE_BUDGET: Duration = Duration::from_secs(180);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn toy() -> PathBuf {
    crate_dir().join("tests/fixtures/toy")
}

// ---------------------------------------------------------------------------
// fixture schemas

/// Expected (component, deps) per bundled concept, in declaration order.
type Structure = Vec<(&'static str, Vec<&'static str>)>;

fn expected_structure() -> Vec<(&'static str, Structure)> {
    vec![
        (
            "tic-tac-toe",
            vec![("board", vec![]), ("symbols", vec![]), ("strategy", vec!["symbols"])],
        ),
        (
            "maze",
            vec![("layout", vec![]), ("walls", vec![]), ("entry-exit", vec!["layout"])],
        ),
        (
            "treasure-map",
            vec![("map", vec![]), ("x-marks-the-spot", vec![]), ("path", vec!["map"])],
        ),
        (
            "solar-system",
            vec![("sun", vec![]), ("planets", vec![]), ("orbits", vec!["sun", "planets"])],
        ),
        (
            "atom",
            vec![
                ("nucleus", vec![]),
                ("electrons", vec![]),
                ("energy-levels", vec!["nucleus", "electrons"]),
            ],
        ),
        (
            "cell",
            vec![("membrane", vec![]), ("nucleus", vec![]), ("organelles", vec![])],
        ),
        (
            "helping",
            vec![
                ("helper", vec![]),
                ("recipient", vec![]),
                ("task", vec!["helper", "recipient"]),
            ],
        ),
        (
            "deceiving",
            vec![
                ("deceiver", vec![]),
                ("victim", vec![]),
                ("deceptive-object", vec!["deceiver", "victim"]),
            ],
        ),
        (
            "negotiating",
            vec![
                ("participants", vec![]),
                ("setting", vec![]),
                ("objects", vec!["participants"]),
            ],
        ),
        (
            "setting-up-table-for-two",
            vec![
                ("table", vec![]),
                ("two-chairs", vec![]),
                ("table-setting", vec!["table"]),
            ],
        ),
        (
            "tidying-up-guest-room",
            vec![
                ("bed", vec![]),
                ("storage", vec![]),
                ("cleanliness", vec!["bed", "storage"]),
            ],
        ),
        (
            "putting-up-decorations-on-door",
            vec![
                ("decoration-type", vec![]),
                ("door-type", vec![]),
                ("tools", vec!["decoration-type"]),
            ],
        ),
    ]
}

fn fixture_suite() -> Check {
    let start = Instant::now();
    let expected = expected_structure();
    ensure(BUNDLED_SCHEMAS.len() == expected.len(), || {
        format!("{} bundled schemas, expected {}", BUNDLED_SCHEMAS.len(), expected.len())
    })?;
    for (concept, nodes) in &expected {
        let path = crate_dir().join("schemas").join(format!("{concept}.schema"));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let program = parse_schema(&text).map_err(|e| format!("{concept}: {e}"))?;
        program.validate().map_err(|e| format!("{concept}: {e}"))?;
        ensure(program.len() <= 4, || {
            format!("{concept}: {} components", program.len())
        })?;
        let got: Vec<(&str, Vec<&str>)> = program
            .nodes()
            .iter()
            .map(|n| (n.id.as_str(), n.deps.iter().map(|d| d.as_str()).collect()))
            .collect();
        ensure(&got == nodes, || format!("{concept}: structure {got:?}"))?;
        let again = parse_schema(&render_schema(&program)).map_err(|e| format!("{concept} re-parse: {e}"))?;
        ensure(again == program, || {
            format!("{concept}: round trip changed the program")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < FIXTURE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("12 schemas in {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// random programs

fn random_ident(rng: &mut ChaCha8Rng) -> String {
    let alpha = b"abcdefghijklmnopqrstuvwxyz";
    let alnum = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let mut s = String::new();
    s.push(alpha[rng.gen_range(0..alpha.len())] as char);
    for _ in 0..rng.gen_range(0..6) {
        s.push(alnum[rng.gen_range(0..alnum.len())] as char);
    }
    for _ in 0..rng.gen_range(0..3) {
        s.push('-');
        for _ in 0..rng.gen_range(1..4) {
            s.push(alnum[rng.gen_range(0..alnum.len())] as char);
        }
    }
    s
}

fn random_program(rng: &mut ChaCha8Rng) -> (SchemaProgram, Vec<Vec<usize>>) {
    let concept = random_ident(rng);
    let n = rng.gen_range(1..=4);
    let mut names: Vec<String> = Vec::new();
    while names.len() < n {
        let name = random_ident(rng);
        if !names.contains(&name) {
            names.push(name);
        }
    }
    let mut deps = Vec::new();
    let mut nodes = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let mut ds: Vec<usize> = (0..i).filter(|_| rng.gen_bool(0.5)).collect();
        ds.shuffle(rng);
        nodes.push(ComponentNode {
            id: ComponentId::new(name.clone()).unwrap(),
            concept: concept.clone(),
            deps: ds
                .iter()
                .map(|&d| ComponentId::new(names[d].clone()).unwrap())
                .collect(),
            declaration_index: i,
        });
        deps.push(ds);
    }
    (
        SchemaProgram::new(concept, nodes).expect("generated program is valid"),
        deps,
    )
}

/// Replays the order: each step must take the lowest-index node whose deps are all placed.
fn tie_break_holds(order: &[usize], deps: &[Vec<usize>]) -> bool {
    let mut placed = vec![false; deps.len()];
    for &next in order {
        let ready = (0..deps.len()).find(|&i| !placed[i] && deps[i].iter().all(|&d| placed[d]));
        if ready != Some(next) {
            return false;
        }
        placed[next] = true;
    }
    placed.iter().all(|&p| p)
}

fn dag_properties() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED);
    let mut edges = 0;
    for case in 0..PROPERTY_PROGRAMS {
        let (program, deps) = random_program(&mut rng);
        edges += program.edge_count();
        let order: Vec<usize> = topological_order(&program)
            .iter()
            .map(|id| program.node(id.as_str()).unwrap().declaration_index)
            .collect();
        let pos: HashMap<usize, usize> = order.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        for (i, ds) in deps.iter().enumerate() {
            for d in ds {
                ensure(pos[d] < pos[&i], || format!("case {case}: dep after node in {order:?}"))?;
            }
        }
        ensure(tie_break_holds(&order, &deps), || {
            format!("case {case}: tie-break broken in {order:?}")
        })?;
        let text = render_schema(&program);
        let again = parse_schema(&text).map_err(|e| format!("case {case}: {e}\n{text}"))?;
        ensure(again == program, || format!("case {case}: round trip changed\n{text}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < PROPERTY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{PROPERTY_PROGRAMS} programs, {edges} edges, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// grounding conditioning

fn description_for(concept: &str, component: &str) -> String {
    format!("{component} token {}", concept.len() * 31 + component.len())
}

fn ancestors(program: &SchemaProgram, id: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<String> = program.node(id).unwrap().deps.iter().map(|d| d.to_string()).collect();
    while let Some(next) = stack.pop() {
        if out.insert(next.clone()) {
            stack.extend(program.node(&next).unwrap().deps.iter().map(|d| d.to_string()));
        }
    }
    out
}

fn conditioning_oracle() -> Check {
    let image = ImageRef::inline(b"synthetic image".to_vec(), MediaType::Png);
    let mut dependents = 0;
    for (concept, _) in BUNDLED_SCHEMAS {
        let program = load_canonical_schema(concept).map_err(|e| e.to_string())?;
        let rules: Vec<(String, String)> = program
            .nodes()
            .iter()
            .map(|n| {
                (
                    format!("What is the {}? Answer", n.id),
                    description_for(concept, n.id.as_str()),
                )
            })
            .collect();
        let vlm = BackendHandle::new(ScriptedBackend::from_pairs(
            "oracle",
            rules.iter().map(|(k, v)| (k.as_str(), v.as_str())),
        ));
        for strategy in [GroundingStrategy::Hierarchical, GroundingStrategy::Sequential] {
            let resolved = ground(&program, &image, &vlm, strategy, &GroundingConfig::default())
                .map_err(|e| format!("{concept}: {e}"))?;
            for b in &resolved.bindings {
                ensure(b.description == description_for(concept, b.component.as_str()), || {
                    format!("{concept}/{}: bound `{}`", b.component, b.description)
                })?;
                let all_descs: Vec<String> = program
                    .nodes()
                    .iter()
                    .filter(|n| n.id != b.component)
                    .map(|n| description_for(concept, n.id.as_str()))
                    .collect();
                match strategy {
                    GroundingStrategy::Hierarchical => {
                        for a in ancestors(&program, b.component.as_str()) {
                            let clause = format!("The {a} is {}. ", description_for(concept, &a));
                            ensure(b.query_text.contains(&clause), || {
                                format!("{concept}/{}: missing `{clause}` in `{}`", b.component, b.query_text)
                            })?;
                        }
                        if !program.node(b.component.as_str()).unwrap().deps.is_empty() {
                            dependents += 1;
                        }
                    }
                    GroundingStrategy::Sequential => {
                        for d in &all_descs {
                            ensure(!b.query_text.contains(d.as_str()), || {
                                format!("{concept}/{}: sequential query mentions `{d}`", b.component)
                            })?;
                        }
                        for n in program.nodes() {
                            let clause = format!("The {} is ", n.id);
                            ensure(!b.query_text.contains(&clause), || {
                                format!("{concept}/{}: sequential query has `{clause}`", b.component)
                            })?;
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "12 schemas, {dependents} dependent components checked both ways"
    ))
}

// ---------------------------------------------------------------------------
// prompt sentence

fn prompt_faithfulness() -> Check {
    let maze = load_canonical_schema("maze").map_err(|e| e.to_string())?;
    let image = ImageRef::inline(b"maze picture".to_vec(), MediaType::Png);
    let vlm = BackendHandle::new(ScriptedBackend::from_pairs(
        "maze",
        [
            ("What is the layout?", "rectangular"),
            ("What is the walls?", "coffee beans"),
            ("What is the entry-exit?", "coffee cups"),
        ],
    ));
    let resolved = ground(
        &maze,
        &image,
        &vlm,
        GroundingStrategy::Hierarchical,
        &GroundingConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let instance = VqaInstance {
        id: "maze-1".into(),
        concept: "maze".into(),
        category: Category::Strategic,
        image,
        question: "How many exits are there?".into(),
        question_type: QuestionType::Counting,
        options: None,
        annotator_answers: vec!["1".into(); 5],
        modal_answer: "1".into(),
    };
    let messages = build_augmented_prompt(&instance, AnswerMode::FullDsg, Some(&maze), Some(&resolved))
        .map_err(|e| e.to_string())?;
    let prompt = &messages.last().unwrap().text;
    let want = "Imagine that the image represents a maze, and the layout is rectangular, \
                and the walls are coffee beans, and the entry and exit are coffee cups.";
    let first = prompt.lines().next().unwrap_or_default();
    ensure(first == want, || format!("got `{first}`"))?;
    ensure(messages.len() == 7, || {
        format!(
            "{} messages, expected transcript of 6 plus the question",
            messages.len()
        )
    })?;
    Ok("maze sentence reproduced verbatim".into())
}

// ---------------------------------------------------------------------------
// metrics

fn synthetic_instance(id: &str, answers: [&str; 5], qt: QuestionType, cat: Category) -> VqaInstance {
    let answers: Vec<String> = answers.iter().map(|s| s.to_string()).collect();
    VqaInstance {
        id: id.into(),
        concept: "maze".into(),
        category: cat,
        image: ImageRef::inline(id.as_bytes().to_vec(), MediaType::Png),
        question: format!("question {id}"),
        question_type: qt,
        options: None,
        modal_answer: dsg::eval::modal_answer(&answers).unwrap().clone(),
        annotator_answers: answers,
    }
}

fn prediction(id: &str, text: &str, run: u32) -> Prediction {
    Prediction {
        instance_id: id.into(),
        mode: AnswerMode::FullDsg,
        raw_text: text.into(),
        normalized: text.into(),
        run_index: run,
    }
}

fn manifest(instances: Vec<VqaInstance>) -> DatasetManifest {
    DatasetManifest {
        version: 1,
        subset: true,
        instances,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn metric_oracles() -> Check {
    use Category::*;
    use QuestionType::*;
    // K = number of annotators giving the predicted answer.
    let rows: [(&str, [&str; 5], &str, QuestionType, Category); 10] = [
        ("k0", ["a", "a", "a", "b", "b"], "c", Open, Strategic),
        ("k2", ["a", "a", "a", "b", "b"], "b", Open, Strategic),
        ("k4", ["a", "a", "a", "a", "b"], "a", Binary, Scientific),
        ("k5", ["a", "a", "a", "a", "a"], "a", Binary, Scientific),
        ("n1", ["2", "2", "2", "3", "4"], "two", Counting, Social),
        ("n2", ["2", "2", "2", "3", "4"], "3", Counting, Social),
        ("y1", ["yes", "yes", "no", "yes", "no"], "Yes", Binary, Domestic),
        ("y2", ["no", "no", "no", "no", "yes"], "yes", Binary, Domestic),
        ("o1", ["red", "red", "blue", "red", "red"], "the red", Open, Domestic),
        ("o2", ["cup", "mug", "cup", "cup", "mug"], "mug", Open, Social),
    ];
    let m = manifest(
        rows.iter()
            .map(|(id, a, _, qt, c)| synthetic_instance(id, *a, *qt, *c))
            .collect(),
    );
    let preds: Vec<Prediction> = rows.iter().map(|(id, _, p, _, _)| prediction(id, p, 0)).collect();

    let graded = graded_accuracy(&preds, &m).map_err(|e| e.to_string())?;
    let exact = exact_match_accuracy(&preds, &m).map_err(|e| e.to_string())?;

    for (id, k) in [("k0", 0.0), ("k2", 0.4), ("k4", 0.8), ("k5", 1.0)] {
        let single = manifest(vec![m.instance(id).unwrap().clone()]);
        let p: Vec<Prediction> = preds.iter().filter(|p| p.instance_id == id).cloned().collect();
        let r = graded_accuracy(&p, &single).map_err(|e| e.to_string())?;
        ensure(close(r.overall.mean, k, METRIC_TOL), || {
            format!("{id}: graded {} != {k}", r.overall.mean)
        })?;
    }

    // Graded K/5 by row: 0,2,4,5,3,1,3,1,4,2 -> 25/50.
    ensure(close(graded.overall.mean, 0.5, METRIC_TOL), || {
        format!("graded overall {}", graded.overall.mean)
    })?;
    // Exact hits: k4 k5 n1 y1 o1 -> 5/10.
    ensure(close(exact.overall.mean, 0.5, METRIC_TOL), || {
        format!("exact overall {}", exact.overall.mean)
    })?;
    let by_type_exact = [(Counting, 0.5), (Binary, 0.75), (Open, 0.25)];
    for (qt, v) in by_type_exact {
        let got = exact.by_question_type[&qt].mean;
        ensure(close(got, v, METRIC_TOL), || format!("exact {qt:?} {got} != {v}"))?;
    }
    let by_cat_graded = [
        (Strategic, 0.2),
        (Scientific, 0.9),
        (Social, 0.4),
        (Domestic, 8.0 / 15.0),
    ];
    for (c, v) in by_cat_graded {
        let got = graded.by_category[&c].mean;
        ensure(close(got, v, METRIC_TOL), || format!("graded {c:?} {got} != {v}"))?;
    }

    // Five runs over 20 instances scoring 12, 12, 14, 14, 13 -> 0.6, 0.6, 0.7, 0.7, 0.65.
    let twenty = manifest(
        (0..20)
            .map(|i| synthetic_instance(&format!("r{i:02}"), ["x"; 5], Open, Social))
            .collect(),
    );
    let mut reports = Vec::new();
    for (run, hits) in [12, 12, 14, 14, 13].into_iter().enumerate() {
        let p: Vec<Prediction> = (0..20)
            .map(|i| prediction(&format!("r{i:02}"), if i < hits { "x" } else { "y" }, run as u32))
            .collect();
        reports.push(exact_match_accuracy(&p, &twenty).map_err(|e| e.to_string())?);
    }
    let agg = aggregate_runs(&reports).map_err(|e| e.to_string())?;
    // Population std: deviations +-0.05 four times and 0 once -> sqrt(0.01 / 5).
    let want_std = (0.01f64 / 5.0).sqrt();
    ensure(close(agg.overall.mean, 0.65, AGGREGATE_TOL), || {
        format!("mean {}", agg.overall.mean)
    })?;
    ensure(close(agg.overall.std, want_std, AGGREGATE_TOL), || {
        format!("std {}", agg.overall.std)
    })?;
    ensure(format!("{:.4}", agg.overall.std) == "0.0447", || {
        format!("std rounds to {:.4}", agg.overall.std)
    })?;
    Ok(format!(
        "K/5 oracles hold, aggregate {:.4} ± {:.4} over {} runs",
        agg.overall.mean, agg.overall.std, agg.runs
    ))
}

// ---------------------------------------------------------------------------
// end-to-end

fn dsg(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_dsg"))
        .args(args)
        .output()
        .map_err(|e| format!("spawning dsg: {e}"))
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn words(text: &str) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for w in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        *out.entry(w.to_lowercase()).or_insert(0) += 1;
    }
    out
}

fn strictly_within(small: &BTreeMap<String, usize>, big: &BTreeMap<String, usize>) -> bool {
    small.iter().all(|(w, n)| big.get(w).is_some_and(|m| m >= n)) && small != big
}

fn prompt_text(messages: &[dsg::gateway::Message]) -> String {
    messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n")
}

fn end_to_end() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache = work.path().join("cache");
    let manifest_path = toy().join("manifest.json");
    let backends = toy().join("backends.json");
    let mut trees = Vec::new();
    for i in 0..DETERMINISM_REPEATS {
        let out = work.path().join(format!("out-{i}"));
        let o = dsg(&[
            "ablate",
            "--manifest",
            manifest_path.to_str().unwrap(),
            "--backend-config",
            backends.to_str().unwrap(),
            "--backend",
            "vlm",
            "--cache-dir",
            cache.to_str().unwrap(),
            "--runs",
            "2",
            "--out",
            out.to_str().unwrap(),
        ])?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        trees.push((read_tree(&out), o.stdout));
    }
    let (first, stdout) = &trees[0];
    ensure(first.contains_key(Path::new("ablation.json")), || {
        "no ablation.json".into()
    })?;
    for (i, (tree, out)) in trees.iter().enumerate().skip(1) {
        ensure(tree == first && out == stdout, || {
            format!("execution {i} differs from the first")
        })?;
    }

    let manifest = load_manifest(&manifest_path).map_err(|e| e.to_string())?;
    let vlm = BackendHandle::new(ScriptedBackend::from_file("vlm", toy().join("vlm.json")).map_err(|e| e.to_string())?);
    let mut checked = 0;
    for inst in &manifest.instances {
        let schema = load_canonical_schema(&inst.concept).map_err(|e| e.to_string())?;
        let seq = ground(
            &schema,
            &inst.image,
            &vlm,
            GroundingStrategy::Sequential,
            &GroundingConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let hier = ground(
            &schema,
            &inst.image,
            &vlm,
            GroundingStrategy::Hierarchical,
            &GroundingConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let text = |mode: AnswerMode| -> Result<BTreeMap<String, usize>, String> {
            let resolved = match mode.grounding() {
                Some(GroundingStrategy::Sequential) => Some(&seq),
                Some(GroundingStrategy::Hierarchical) => Some(&hier),
                None => None,
            };
            let msgs = build_augmented_prompt(inst, mode, Some(&schema), resolved).map_err(|e| e.to_string())?;
            Ok(words(&prompt_text(&msgs)))
        };
        let base = text(AnswerMode::Baseline)?;
        let schema_only = text(AnswerMode::SchemaOnly)?;
        let sequential = text(AnswerMode::GroundingSequential)?;
        let hierarchical = text(AnswerMode::GroundingHierarchical)?;
        let full = text(AnswerMode::FullDsg)?;
        let chain = [
            ("baseline", &base, "schema_only", &schema_only),
            ("schema_only", &schema_only, "grounding_sequential", &sequential),
            ("schema_only", &schema_only, "grounding_hierarchical", &hierarchical),
            ("grounding_hierarchical", &hierarchical, "full_dsg", &full),
        ];
        for (a, small, b, big) in chain {
            ensure(strictly_within(small, big), || {
                format!("{}: {a} is not within {b}", inst.id)
            })?;
        }
        checked += 1;
    }
    Ok(format!(
        "{DETERMINISM_REPEATS} executions byte-identical ({} files), prompt chain monotone on {checked} instances",
        first.len()
    ))
}

fn table_shaped_report() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest_path = toy().join("manifest.json");
    let backends = toy().join("backends.json");
    let o = dsg(&[
        "evaluate",
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--backend-config",
        backends.to_str().unwrap(),
        "--backend",
        "vlm",
        "--runs",
        "5",
        "--mode",
        "baseline",
        "--mode",
        "full_dsg",
        "--human",
        "--out",
        work.path().to_str().unwrap(),
    ])?;
    ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    let stdout = String::from_utf8_lossy(&o.stdout);
    let headers: Vec<Vec<String>> = stdout
        .lines()
        .filter(|l| l.starts_with("Method"))
        .map(|l| l.split('|').map(|c| c.trim().to_string()).collect())
        .collect();
    ensure(headers.len() == 2, || format!("expected two tables:\n{stdout}"))?;
    ensure(headers[0] == ["Method", "All", "Counting", "Binary", "Open"], || {
        format!("{:?}", headers[0])
    })?;
    ensure(
        headers[1] == ["Method", "Strategic", "Scientific", "Social", "Domestic", "All"],
        || format!("{:?}", headers[1]),
    )?;
    for row in ["baseline", "full_dsg", "human"] {
        ensure(stdout.lines().filter(|l| l.starts_with(row)).count() == 2, || {
            format!("row {row} missing")
        })?;
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(work.path().join("report-full_dsg.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(report["runs"] == 5, || format!("runs {}", report["runs"]))?;
    ensure(
        report["overall"]["per_run"].as_array().map(|a| a.len()) == Some(5),
        || "per_run".into(),
    )?;
    Ok("evaluate --runs 5 emits question-type and category tables".into())
}

fn live_smoke() -> Outcome {
    let (Ok(config), Ok(manifest)) = (
        std::env::var("DSG_LIVE_BACKEND_CONFIG"),
        std::env::var("DSG_LIVE_MANIFEST"),
    ) else {
        return Outcome::Skip("set DSG_LIVE_BACKEND_CONFIG and DSG_LIVE_MANIFEST to run".into());
    };
    let run = || -> Check {
        let work = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cache = work.path().join("cache");
        let limit = LIVE_INSTANCES.to_string();
        let mut args: Vec<String> = [
            "evaluate",
            "--manifest",
            &manifest,
            "--backend-config",
            &config,
            "--cache-dir",
            cache.to_str().unwrap(),
            "--limit",
            &limit,
            "--mode",
            "full_dsg",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if let Ok(id) = std::env::var("DSG_LIVE_BACKEND") {
            args.extend(["--backend".to_string(), id]);
        }
        let invoke = |out: &Path| -> Result<(), String> {
            let mut a = args.clone();
            a.extend(["--out".to_string(), out.display().to_string()]);
            let refs: Vec<&str> = a.iter().map(|s| s.as_str()).collect();
            let o = dsg(&refs)?;
            ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())
        };
        let start = Instant::now();
        invoke(&work.path().join("first"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < LIVE_BUDGET, || format!("took {elapsed:?}"))?;
        let cached = std::fs::read_dir(&cache).map_err(|e| e.to_string())?.count();
        invoke(&work.path().join("second"))?;
        let after = std::fs::read_dir(&cache).map_err(|e| e.to_string())?.count();
        ensure(after == cached, || {
            format!("rerun added {} cache entries", after - cached)
        })?;
        ensure(
            read_tree(&work.path().join("first")) == read_tree(&work.path().join("second")),
            || "cached rerun differs".into(),
        )?;
        Ok(format!(
            "{LIVE_INSTANCES} instances in {elapsed:.1?}, {cached} cached replies"
        ))
    };
    match run() {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}

fn main() {
    type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);
    let criteria: Vec<Criterion> = vec![
        ("fixture-schemas", Box::new(|| wrap(fixture_suite()))),
        ("dag-properties", Box::new(|| wrap(dag_properties()))),
        ("hierarchical-conditioning", Box::new(|| wrap(conditioning_oracle()))),
        ("prompt-faithfulness", Box::new(|| wrap(prompt_faithfulness()))),
        ("metric-oracles", Box::new(|| wrap(metric_oracles()))),
        ("end-to-end-determinism", Box::new(|| wrap(end_to_end()))),
        ("table-shaped-report", Box::new(|| wrap(table_shaped_report()))),
        ("live-smoke", Box::new(live_smoke)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Outcome::Pass(msg) => println!("PASS  {name:<26} {msg}"),
            Outcome::Skip(msg) => println!("SKIP  {name:<26} {msg}"),
            Outcome::Fail(msg) => {
                failed += 1;
                println!("FAIL  {name:<26} {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn wrap(check: Check) -> Outcome {
    match check {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}
