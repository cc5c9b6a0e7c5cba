//! Artifact directory layout:
//!
//! ```text
//! config.toml                 resolved configuration
//! generate/counts.txt         candidate count per vertex multiset
//! baseline/env<i>.csv         standard-machine training curves
//! baseline/normalization.txt  env <i> <max return>
//! pruned/<cluster>_<k>.ham    applicable machines
//! prune_manifest.txt
//! search/<cluster>.log        one line per internal step
//! search/<cluster>.ham        best machine per cluster
//! search/summary.txt
//! combined/<cluster>.ham
//! combined_manifest.txt
//! curves/{ham,flat}_seed<i>.csv
//! summary.txt
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{summary_text, CombinedSolution, EvalReport, ExperimentConfig, Provenance};
use crate::blocks::ClusterKey;
use crate::error::{Error, Result};
use crate::flat_q::LearningCurve;
use crate::ham::{from_text, to_text, MachineGraph};
use crate::internal_env::SearchResult;
use crate::machine_gen::{count_by_multiset, VertexMultiset};
use crate::pruning::{Baseline, PrunedSet};

/// File-name stem for a cluster, e.g. `c2_true`.
pub fn cluster_stem(c: ClusterKey) -> String {
    format!("c{}_{}", c.manip_height, c.holding)
}

fn parse_cluster(h: &str, hold: &str, line: usize) -> Result<ClusterKey> {
    let bad = || Error::Parse {
        line,
        msg: format!("bad cluster `{h} {hold}`"),
    };
    Ok(ClusterKey::new(
        h.parse().map_err(|_| bad())?,
        hold.parse().map_err(|_| bad())?,
    ))
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Artifacts {
            root: root.to_path_buf(),
        })
    }

    pub fn open(root: &Path) -> Self {
        Artifacts {
            root: root.to_path_buf(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: &str, contents: &str) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    pub fn read(&self, rel: &str) -> Result<String> {
        let path = self.path(rel);
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }

    pub fn read_machine(&self, rel: &str) -> Result<MachineGraph> {
        from_text(&self.read(rel)?)
    }

    pub fn write_generated(&self, candidates: &[MachineGraph]) -> Result<()> {
        let mut counts: BTreeMap<VertexMultiset, usize> = BTreeMap::new();
        for g in candidates {
            let mut kinds = g.kinds().to_vec();
            kinds.sort();
            *counts.entry(VertexMultiset(kinds)).or_default() += 1;
        }
        let mut out = String::new();
        for (m, n) in &counts {
            let _ = writeln!(out, "{n} {m}");
        }
        let _ = writeln!(out, "total {}", candidates.len());
        self.write("generate/counts.txt", &out)
    }

    pub fn write_generated_counts(&self, params: &crate::machine_gen::GenParams) -> Result<()> {
        let mut out = String::new();
        for (m, n) in count_by_multiset(params) {
            let _ = writeln!(out, "{n} {m}");
        }
        self.write("generate/counts.txt", &out)
    }

    pub fn write_baseline(&self, _config: &ExperimentConfig, baseline: &Baseline) -> Result<()> {
        let mut norm = String::new();
        for (i, (curve, max)) in baseline.curves.iter().zip(&baseline.max_returns).enumerate() {
            self.write(&format!("baseline/env{i}.csv"), &curve.to_csv())?;
            let _ = writeln!(norm, "env {i} {max}");
        }
        self.write("baseline/normalization.txt", &norm)
    }

    pub fn read_normalization(&self) -> Result<Vec<f64>> {
        let text = self.read("baseline/normalization.txt")?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.split_whitespace()
                    .nth(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: i + 1,
                        msg: "expected `env <i> <max>`".into(),
                    })
            })
            .collect()
    }

    pub fn write_pruned(&self, pruned: &PrunedSet) -> Result<()> {
        let mut names: HashMap<(ClusterKey, String), String> = HashMap::new();
        for (&c, machines) in &pruned.map {
            for (k, g) in machines.iter().enumerate() {
                let rel = format!("pruned/{}_{k}.ham", cluster_stem(c));
                let text = to_text(g);
                self.write(&rel, &text)?;
                names.insert((c, text), rel);
            }
        }
        // Machines are looked up per cluster by their text.
        let mut out = String::new();
        for (&c, machines) in &pruned.map {
            let single = PrunedSet {
                map: BTreeMap::from([(c, machines.clone())]),
            };
            out.push_str(&single.manifest(|g| names[&(c, to_text(g))].clone()));
        }
        self.write("prune_manifest.txt", &out)
    }

    pub fn read_pruned(&self) -> Result<PrunedSet> {
        PrunedSet::from_manifest(&self.read("prune_manifest.txt")?, |rel| self.read_machine(rel))
    }

    pub fn write_searches(&self, searches: &BTreeMap<ClusterKey, SearchResult>) -> Result<()> {
        let mut summary = String::new();
        for (&c, r) in searches {
            let stem = cluster_stem(c);
            self.write(&format!("search/{stem}.log"), &r.log_text())?;
            self.write(&format!("search/{stem}.ham"), &to_text(&r.best))?;
            let prov = if r.is_standard {
                Provenance::Standard
            } else {
                Provenance::Searched
            };
            let _ = writeln!(
                summary,
                "cluster {} {} r_int {} provenance {prov} machine search/{stem}.ham",
                c.manip_height, c.holding, r.best_r_int
            );
        }
        self.write("search/summary.txt", &summary)
    }

    /// Best machine and mean return per cluster from `search/summary.txt`.
    pub fn read_search_summary(&self) -> Result<BTreeMap<ClusterKey, (MachineGraph, f64)>> {
        let text = self.read("search/summary.txt")?;
        let mut out = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            if t.len() != 9 || t[0] != "cluster" || t[3] != "r_int" || t[7] != "machine" {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("malformed search summary line `{line}`"),
                });
            }
            let c = parse_cluster(t[1], t[2], i + 1)?;
            let r: f64 = t[4].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad return `{}`", t[4]),
            })?;
            out.insert(c, (self.read_machine(t[8])?, r));
        }
        Ok(out)
    }

    pub fn write_combined(&self, solution: &CombinedSolution) -> Result<()> {
        let mut out = String::new();
        for (&c, g) in &solution.cluster_map {
            let rel = format!("combined/{}.ham", cluster_stem(c));
            self.write(&rel, &to_text(g))?;
            let _ = writeln!(
                out,
                "cluster {} {} machine {rel} provenance {}",
                c.manip_height, c.holding, solution.provenance[&c]
            );
        }
        for s in &solution.steps {
            let _ = writeln!(
                out,
                "# step {} {} with_searched {} with_standard {} kept {}",
                s.cluster.manip_height, s.cluster.holding, s.with_searched, s.with_standard, s.kept
            );
        }
        self.write("combined_manifest.txt", &out)
    }

    pub fn read_combined(&self) -> Result<CombinedSolution> {
        let text = self.read("combined_manifest.txt")?;
        let mut sol = CombinedSolution::all_standard(&[]);
        for (i, line) in text.lines().enumerate() {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() || t[0] == "#" {
                continue;
            }
            if t.len() != 7 || t[0] != "cluster" || t[3] != "machine" || t[5] != "provenance" {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("malformed combined manifest line `{line}`"),
                });
            }
            let c = parse_cluster(t[1], t[2], i + 1)?;
            sol.cluster_map.insert(c, self.read_machine(t[4])?);
            sol.provenance.insert(c, t[6].parse()?);
        }
        Ok(sol)
    }

    pub fn write_eval(
        &self,
        ham: &[LearningCurve],
        flat: &[LearningCurve],
        report: &EvalReport,
        config: &ExperimentConfig,
        baseline: &Baseline,
    ) -> Result<()> {
        self.write_curves(ham, flat)?;
        self.write("summary.txt", &summary_text(report, config, &baseline.max_returns))
    }

    pub fn write_curves(&self, ham: &[LearningCurve], flat: &[LearningCurve]) -> Result<()> {
        for (i, c) in ham.iter().enumerate() {
            self.write(&format!("curves/ham_seed{i}.csv"), &c.to_csv())?;
        }
        for (i, c) in flat.iter().enumerate() {
            self.write(&format!("curves/flat_seed{i}.csv"), &c.to_csv())?;
        }
        Ok(())
    }

    /// Tidy `method,seed,episode,reward,steps,normalized` rows built from
    /// the per-seed curve files.
    pub fn plot_data(&self) -> Result<String> {
        let mut out = String::from("method,seed,episode,reward,steps,normalized\n");
        for method in ["ham", "flat"] {
            for seed in 0.. {
                let rel = format!("curves/{method}_seed{seed}.csv");
                if !self.path(&rel).exists() {
                    break;
                }
                for row in self.read(&rel)?.lines().skip(1) {
                    let _ = writeln!(out, "{method},{seed},{row}");
                }
            }
        }
        Ok(out)
    }
}
