use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use vesselx::metrics::{mann_whitney_u, median, spearman_rho, PValueMethod};
use vesselx::raster::write_bytes_atomic;
use vesselx::tortuosity::{TortuosityIndex, RESERVED_INDEX_IDS};

#[derive(Args)]
pub struct CompareArgs {
    /// `group,report` lines naming tortuosity or per-subject reports;
    /// relative paths resolve against this file's directory.
    #[arg(long)]
    groups: PathBuf,
    /// Index id (dm, tc, tcal, tsc, tscal, icm, eti); repeatable, all by default.
    #[arg(long = "index")]
    indices: Vec<String>,
    /// Rank correlation of two groups paired by image or subject name
    /// instead of the Mann-Whitney test.
    #[arg(long)]
    paired: bool,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Index values of one group keyed by image (from `ALL` rows) or subject.
type GroupValues = BTreeMap<String, BTreeMap<String, f64>>;

fn read_groups(path: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading groups file {}", path.display()))?;
    let mut out: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}: line {}: expected group,report", path.display(), i + 1);
        }
        if i == 0 && &rec[0] == "group" {
            continue;
        }
        let p = Path::new(&rec[1]);
        out.entry(rec[0].to_string()).or_default().push(if p.is_absolute() { p.to_path_buf() } else { base.join(p) });
    }
    Ok(out)
}

/// Reads `key -> index -> value` from a tortuosity report (image `ALL`
/// rows) or a per-subject report. Empty cells are skipped.
fn read_report(path: &Path, into: &mut GroupValues) -> Result<()> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading report {}", path.display()))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (key_col, all_col) = match (col("image"), col("segment"), col("subject")) {
        (Some(k), Some(s), _) => (k, Some(s)),
        (_, _, Some(k)) => (k, None),
        _ => bail!("{}: not a tortuosity report (no image/segment or subject column)", path.display()),
    };
    for rec in rd.records() {
        let rec = rec?;
        if all_col.is_some_and(|c| &rec[c] != "ALL") {
            continue;
        }
        let entry = into.entry(rec[key_col].to_string()).or_default();
        for (i, h) in headers.iter().enumerate() {
            if TortuosityIndex::from_id(h).is_some() && !rec[i].is_empty() {
                let v: f64 = rec[i]
                    .parse()
                    .with_context(|| format!("{}: bad {h} value '{}'", path.display(), &rec[i]))?;
                entry.insert(h.to_string(), v);
            }
        }
    }
    Ok(())
}

fn resolve_indices(requested: &[String], available: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(available.to_vec());
    }
    let mut out = Vec::new();
    for id in requested {
        if TortuosityIndex::from_id(id).is_none() {
            if RESERVED_INDEX_IDS.contains(&id.as_str()) {
                bail!("index '{id}' is reserved but not implemented");
            }
            let known: Vec<&str> = TortuosityIndex::ALL.iter().map(|i| i.id()).collect();
            bail!("unknown index '{id}'; known: {}", known.join(", "));
        }
        if !available.contains(id) {
            bail!("index '{id}' is absent from the reports");
        }
        out.push(id.clone());
    }
    Ok(out)
}

fn values(group: &GroupValues, index: &str) -> Vec<f64> {
    group.values().filter_map(|m| m.get(index).copied()).collect()
}

pub fn run(args: &CompareArgs) -> Result<()> {
    let groups_files = read_groups(&args.groups)?;
    if groups_files.len() < 2 {
        bail!("need at least two groups, found {}", groups_files.len());
    }
    let mut groups: BTreeMap<String, GroupValues> = BTreeMap::new();
    for (name, paths) in &groups_files {
        let g = groups.entry(name.clone()).or_default();
        for p in paths {
            read_report(p, g)?;
        }
    }
    let available: Vec<String> = TortuosityIndex::ALL
        .iter()
        .map(|i| i.id().to_string())
        .filter(|id| groups.values().any(|g| g.values().any(|m| m.contains_key(id))))
        .collect();
    let indices = resolve_indices(&args.indices, &available)?;
    if indices.is_empty() {
        bail!("the reports hold no index values");
    }
    for index in &indices {
        for (name, g) in &groups {
            if values(g, index).is_empty() {
                bail!("group '{name}' has no values for index '{index}'");
            }
        }
    }

    let names: Vec<&String> = groups.keys().collect();
    let mut out = Vec::new();
    if args.paired {
        if names.len() != 2 {
            bail!("--paired needs exactly two groups, found {}", names.len());
        }
        writeln!(out, "# Spearman rank correlation between paired groups; midranks for ties")?;
        writeln!(out, "# pairs are matched by image or subject name; p is two-sided, t approximation with n - 2 df")?;
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["index", "group_a", "group_b", "n", "rho", "p_two_sided"])?;
        let (a, b) = (&groups[names[0]], &groups[names[1]]);
        for index in &indices {
            let (mut xa, mut xb) = (Vec::new(), Vec::new());
            for (key, va) in a {
                if let (Some(x), Some(y)) = (va.get(index), b.get(key).and_then(|vb| vb.get(index))) {
                    xa.push(*x);
                    xb.push(*y);
                }
            }
            if xa.len() < 3 {
                bail!("index '{index}': {} pairs match by name, need at least 3", xa.len());
            }
            let r = spearman_rho(&xa, &xb).map_err(|e| anyhow!("index '{index}': {e}"))?;
            w.write_record([
                index.clone(),
                names[0].clone(),
                names[1].clone(),
                xa.len().to_string(),
                format!("{:.6}", r.rho),
                format!("{:.6e}", r.p),
            ])?;
        }
        w.flush()?;
    } else {
        writeln!(out, "# Mann-Whitney U test between groups; midranks for ties")?;
        writeln!(out, "# u = min(u_a, u_b); u_a counts pairs with the group_a value larger, ties count 1/2")?;
        writeln!(out, "# p_less: group_a tends smaller; p_greater: group_a tends larger")?;
        writeln!(out, "# method exact: pooled n <= 16 without ties; normal: tie-corrected, continuity-corrected")?;
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record([
            "index", "group_a", "group_b", "n_a", "n_b", "median_a", "median_b", "u", "u_a", "u_b", "p_two_sided",
            "p_less", "p_greater", "method",
        ])?;
        for index in &indices {
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    let (a, b) = (values(&groups[names[i]], index), values(&groups[names[j]], index));
                    let r = mann_whitney_u(&a, &b).map_err(|e| anyhow!("index '{index}': {e}"))?;
                    let med = |v: &[f64]| median(v).map(|m| format!("{m:.6}")).unwrap_or_default();
                    w.write_record([
                        index.clone(),
                        names[i].clone(),
                        names[j].clone(),
                        a.len().to_string(),
                        b.len().to_string(),
                        med(&a),
                        med(&b),
                        format!("{}", r.u),
                        format!("{}", r.u_a),
                        format!("{}", r.u_b),
                        format!("{:.6e}", r.p_two_sided),
                        format!("{:.6e}", r.p_less),
                        format!("{:.6e}", r.p_greater),
                        match r.method {
                            PValueMethod::Exact => "exact".to_string(),
                            PValueMethod::Normal => "normal".to_string(),
                        },
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    match &args.out {
        Some(path) => write_bytes_atomic(path, &out)?,
        None => std::io::stdout().write_all(&out)?,
    }
    Ok(())
}
