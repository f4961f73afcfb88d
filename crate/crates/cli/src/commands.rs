//! Batch commands. Each writes only inside its own output directory.

use std::path::{Path, PathBuf};

use serde_json::json;
use situ_core::eval::report::{
    cost_latency_row, format_cost_table, format_metrics_table, metrics_json, scenario_rows, variant_rows, CountsTable,
};
use situ_core::eval::scenario::run_scenario_with;
use situ_core::eval::{
    bundled, cohen_kappa, run_scenario, AnnotationFile, Category, DecisionTrace, EvalError, MacroPolicy, Scenario,
    ScenarioRun,
};
use situ_core::session::{transcript, EventLog, RecordedFixture, Speaker};
use situ_core::simworld::Scene;
use situ_core::tools::{SystemVariant, ToolRegistry};
use situ_core::view_memory::save_store;

use crate::{BackendArg, CliError, EvalArgs, KappaArgs, ReplayArgs, RunArgs, SchemaArgs};

pub const EVENTS_FILE: &str = "events.ndjson";
pub const TRACE_FILE: &str = "trace.json";
pub const STORE_DIR: &str = "store";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

/// Loads a scenario from a file, falling back to a bundled name, and finds
/// its scene.
pub fn resolve_scenario(arg: &str, scene: Option<&Path>) -> Result<(Scenario, Scene), CliError> {
    let path = Path::new(arg);
    let (scenario, dir) = if path.is_file() {
        let s = Scenario::load(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        (s, path.parent().map(Path::to_path_buf))
    } else if let Some(s) = bundled::scenario(arg) {
        (s, None)
    } else {
        return Err(CliError::config(format!("'{arg}' is neither a scenario file nor a bundled scenario")));
    };

    let load = |p: &Path| Scene::load(p).map_err(|e| CliError::config(e.to_string()));
    let scene = match scene {
        Some(p) => load(p)?,
        None => {
            let sibling = dir.map(|d| d.join("../scenes").join(format!("{}.json", scenario.scene)));
            match sibling.filter(|p| p.is_file()) {
                Some(p) => load(&p)?,
                None => bundled::scene(&scenario.scene)
                    .ok_or_else(|| CliError::config(format!("no scene '{}' found; pass --scene", scenario.scene)))?,
            }
        }
    };
    Ok((scenario, scene))
}

fn scenario_error(e: EvalError) -> CliError {
    CliError::scenario(e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::config(format!("{}: {e}", path.display()))
}

/// Writes `events.ndjson`, `trace.json` and `store/` under `out`.
pub fn write_run(run: &ScenarioRun, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let events = out.join(EVENTS_FILE);
    run.log.write(&events).map_err(|e| io_error(&events, e))?;
    let trace = out.join(TRACE_FILE);
    std::fs::write(&trace, run.trace.to_json()).map_err(|e| io_error(&trace, e))?;
    save_store(&run.store, &out.join(STORE_DIR)).map_err(|e| CliError::config(e.to_string()))
}

fn summary(run: &ScenarioRun, out: &Path) -> String {
    format!(
        "{} {}: {} turns, {} log lines, {} stored views -> {}",
        run.trace.scenario,
        run.trace.variant,
        run.trace.turns.len(),
        run.log.len(),
        run.store.len(),
        out.display()
    )
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let variant = SystemVariant::from(args.variant);
    if args.all {
        for name in bundled::SCENARIO_NAMES {
            let (scenario, scene) = resolve_scenario(name, None)?;
            let mut cfg = scenario.runtime_config(variant);
            cfg.seed = args.seed.unwrap_or(cfg.seed);
            let run = run_scenario(&scenario, &scene, &cfg).map_err(scenario_error)?;
            let out = args.out.join(name);
            write_run(&run, &out)?;
            println!("{}", summary(&run, &out));
        }
        return Ok(());
    }

    let arg = args.scenario.as_deref().expect("clap requires --scenario without --all");
    let (scenario, scene) = resolve_scenario(arg, args.scene.as_deref())?;
    let mut cfg = scenario.runtime_config(variant);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let run = match args.backend {
        BackendArg::Mock => run_scenario(&scenario, &scene, &cfg),
        BackendArg::Fixture => {
            let path = args.fixture.as_deref().expect("clap requires --fixture");
            let log = EventLog::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            run_scenario_with(&scenario, &scene, Box::new(RecordedFixture::from_log(&log)), &cfg)
        }
    }
    .map_err(scenario_error)?;
    write_run(&run, &args.out)?;
    println!("{}", summary(&run, &args.out));
    Ok(())
}

fn print_transcript(log: &EventLog) {
    for turn in transcript(log) {
        let who = match turn.speaker {
            Speaker::User => "user ",
            Speaker::Robot => "robot",
        };
        let tools: Vec<String> = turn.tool_calls.iter().map(|c| c.name().to_string()).collect();
        let tools = if tools.is_empty() {
            String::new()
        } else {
            format!(" [{}]", tools.join(", "))
        };
        println!("{:>8} ms  {who}  {}{tools}", turn.start_ms, turn.text);
    }
}

pub fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let log = EventLog::read(&args.log).map_err(|e| CliError::config(format!("{}: {e}", args.log.display())))?;
    let Some(arg) = args.scenario.as_deref() else {
        print_transcript(&log);
        return Ok(());
    };
    let (scenario, scene) = resolve_scenario(arg, args.scene.as_deref())?;
    let mut cfg = scenario.runtime_config(args.variant.into());
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let run = run_scenario_with(&scenario, &scene, Box::new(RecordedFixture::from_log(&log)), &cfg)
        .map_err(scenario_error)?;
    if let Some(out) = &args.out {
        write_run(&run, out)?;
    }
    let original = log.to_ndjson();
    let replayed = run.log.to_ndjson();
    if original == replayed {
        println!("replay identical: {} log lines", run.log.len());
        return Ok(());
    }
    let line = original
        .lines()
        .zip(replayed.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| original.lines().count().min(replayed.lines().count()));
    Err(CliError::scenario(format!("replay diverges from the log at line {}", line + 1)))
}

fn find_traces(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if path.is_dir() {
            find_traces(&path, found)?;
        } else if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n == TRACE_FILE || n.ends_with(".trace.json"))
        {
            found.push(path);
        }
    }
    Ok(())
}

fn load_annotations(dir: Option<&Path>, scenario: &str) -> Result<AnnotationFile, CliError> {
    match dir {
        Some(dir) => {
            let path = dir.join(format!("{scenario}.json"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::alignment(format!("missing annotations {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::alignment(format!("{}: {e}", path.display())))
        }
        None => bundled::annotations(scenario)
            .ok_or_else(|| CliError::alignment(format!("no bundled annotations for '{scenario}'"))),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let policy = MacroPolicy::from(args.policy);
    std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let txt = args.out.join(REPORT_TXT);
    let json_path = args.out.join(REPORT_JSON);

    if let Some(counts) = &args.counts {
        let text = std::fs::read_to_string(counts).map_err(|e| io_error(counts, e))?;
        let table = CountsTable::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", counts.display())))?;
        let rows = table.rows(policy);
        write_text(&txt, &format_metrics_table(&rows))?;
        write_text(&json_path, &metrics_json(&rows))?;
        println!("wrote {} and {}", txt.display(), json_path.display());
        return Ok(());
    }

    let dir = args.traces.as_deref().expect("clap requires --traces without --counts");
    let mut paths = Vec::new();
    find_traces(dir, &mut paths)?;
    if paths.is_empty() {
        return Err(CliError::config(format!("no trace files under {}", dir.display())));
    }
    let mut runs = Vec::new();
    for path in &paths {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let trace = DecisionTrace::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let annotations = load_annotations(args.annotations.as_deref(), &trace.scenario)?;
        runs.push((trace, annotations));
    }
    runs.sort_by(|(a, _), (b, _)| (&a.scenario, a.variant, a.seed).cmp(&(&b.scenario, b.variant, b.seed)));

    let align = |e: EvalError| CliError::alignment(e.to_string());
    let by_variant = variant_rows(&runs, policy, args.spread.into()).map_err(align)?;
    let by_scenario = scenario_rows(&runs, policy).map_err(align)?;
    let traces: Vec<DecisionTrace> = runs.iter().map(|(t, _)| t.clone()).collect();
    let cards = bundled::rate_cards();
    let cost_rows: Vec<_> = cards.iter().map(|c| cost_latency_row(&c.name, &traces, c)).collect();

    let report = format!(
        "Tool-call metrics by variant\n\n{}\nTool-call metrics by scenario\n\n{}\n{}",
        format_metrics_table(&by_variant),
        format_metrics_table(&by_scenario),
        format_cost_table(&cost_rows, &cards)
    );
    write_text(&txt, &report)?;
    let doc = json!({
        "variants": by_variant,
        "scenarios": by_scenario,
        "cost_latency": cost_rows,
    });
    write_text(&json_path, &(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"))?;
    println!("scored {} traces; wrote {} and {}", runs.len(), txt.display(), json_path.display());
    Ok(())
}

pub fn schema(args: &SchemaArgs) -> Result<(), CliError> {
    let doc = ToolRegistry::for_variant(args.variant.into()).schema_document();
    println!("{}", serde_json::to_string_pretty(&doc).expect("schemas serialize"));
    Ok(())
}

fn read_annotations(path: &Path) -> Result<AnnotationFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn kappa(args: &KappaArgs) -> Result<(), CliError> {
    let a = read_annotations(&args.first)?;
    let b = read_annotations(&args.second)?;
    let ia: Vec<usize> = a.turns.iter().map(|t| t.turn_index).collect();
    let ib: Vec<usize> = b.turns.iter().map(|t| t.turn_index).collect();
    if ia != ib {
        return Err(CliError::alignment("annotation files cover different turns"));
    }
    println!("{:<16} {:>8} {:>10}", "category", "kappa", "agreement");
    for c in Category::ALL {
        let la: Vec<bool> = a.turns.iter().map(|t| t.needs(c)).collect();
        let lb: Vec<bool> = b.turns.iter().map(|t| t.needs(c)).collect();
        let k = cohen_kappa(&la, &lb, &[false, true]).map_err(|e| CliError::alignment(e.to_string()))?;
        let agree = la.iter().zip(&lb).filter(|(x, y)| x == y).count();
        println!("{:<16} {:>8.4} {:>6}/{}", c.as_str(), k, agree, la.len());
    }
    Ok(())
}
