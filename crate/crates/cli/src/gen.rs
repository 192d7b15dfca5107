//! Instance sources: files and named generators.

use std::path::Path;

use gibbs_core::apps::{self, Graph, MATCHING_LIMIT, SUBGRAPH_LIMIT};
use gibbs_core::instances::{self, lower_bound_family, FamilyKind, FamilyParams};
use gibbs_core::GibbsInstance;

use crate::config::{GenSpec, InstanceSource, Task};
use crate::error::{usage, HarnessError};

/// Resolved problem: the instance every oracle is built on, plus the graph and
/// its exact counts for the counting applications.
#[derive(Clone, Debug)]
pub struct Problem {
    pub inst: GibbsInstance,
    pub graph: Option<GraphProblem>,
}

#[derive(Clone, Debug)]
pub struct GraphProblem {
    pub graph: Graph,
    /// `M_0..M_v` for matchings, or the instance counts `c_i = N_{|E|-i}` for subgraphs.
    pub counts: Vec<u64>,
}

/// Small integer instance with counts `(1, 2, 1)` on `{0, 1, 2}` and range `[0, 1]`.
pub fn instance_a() -> GibbsInstance {
    GibbsInstance::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0], 0.0, 1.0).unwrap()
}

/// Loads or generates the problem `task` runs on.
pub fn resolve(source: &InstanceSource, task: Task) -> Result<Problem, HarnessError> {
    let graph_task = task.wants_graph();
    match source {
        InstanceSource::File(path) if graph_task => graph_problem(Graph::load(path)?, task),
        InstanceSource::File(path) => Ok(Problem { inst: GibbsInstance::load(path)?, graph: None }),
        InstanceSource::Gen(spec) => {
            if graph_task != (spec.name == "graph") {
                return usage(format!("generator {} does not fit task {}", spec.name, task.name()));
            }
            if graph_task {
                let g = match (spec.get("arg"), spec.get("file")) {
                    (Some(name), None) => Graph::named(name)?,
                    (None, Some(file)) => Graph::load(Path::new(file))?,
                    _ => return usage("graph generator takes a name (graph:K4) or file=<path>"),
                };
                graph_problem(g, task)
            } else {
                Ok(Problem { inst: generate(spec)?, graph: None })
            }
        }
    }
}

fn graph_problem(graph: Graph, task: Task) -> Result<Problem, HarnessError> {
    let (counts, inst) = if task == Task::CountMatchings {
        apps::matchings_instance(&graph, MATCHING_LIMIT)?
    } else {
        let (n_by_size, inst) = apps::connected_subgraphs_instance(&graph, SUBGRAPH_LIMIT)?;
        // Reorder to the instance's indexing c_i = N_{|E|-i}.
        let e = graph.num_edges();
        let n = inst.n() as usize;
        ((0..=n).map(|i| n_by_size[e - i]).collect(), inst)
    };
    Ok(Problem { inst, graph: Some(GraphProblem { graph, counts }) })
}

fn list(spec: &GenSpec, key: &str) -> Result<Option<Vec<f64>>, HarnessError> {
    spec.get(key)
        .map(|v| {
            v.split('|')
                .map(|p| p.trim().parse::<f64>().map_err(|_| HarnessError::Usage(format!("bad entry {p:?} in {key}="))))
                .collect()
        })
        .transpose()
}

fn whole(v: f64, key: &str) -> Result<usize, HarnessError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        usage(format!("{key} must be a nonnegative integer"))
    }
}

/// Builds a non-graph instance from a generator spec.
pub fn generate(spec: &GenSpec) -> Result<GibbsInstance, HarnessError> {
    match spec.name.as_str() {
        "a" => Ok(instance_a()),
        "counts" => {
            let counts = list(spec, "c")?.ok_or_else(|| HarnessError::Usage("counts generator needs c=c0|c1|...".into()))?;
            let support = list(spec, "support")?.unwrap_or_else(|| (0..counts.len()).map(|k| k as f64).collect());
            let bmin = spec.num("bmin", Some(0.0))?;
            let bmax = spec.num("bmax", Some(1.0))?;
            Ok(GibbsInstance::new(support, counts, bmin, bmax)?)
        }
        "poly" => {
            let m = match (spec.get("m"), spec.get("n")) {
                (Some(_), _) => whole(spec.num("m", None)?, "m")?,
                (None, Some(_)) => {
                    let n = whole(spec.num("n", None)?, "n")?;
                    if n % 2 != 0 {
                        return usage("poly needs an even n");
                    }
                    n / 2
                }
                (None, None) => 2,
            };
            Ok(instances::logconcave_poly_instance(m, spec.num("q", Some(8.0))?)?)
        }
        "family" => {
            let kind: FamilyKind = spec.get("kind").unwrap_or("poly-envelope").parse()?;
            let d = FamilyParams::default();
            let params = FamilyParams {
                delta: spec.num("delta", Some(d.delta))?,
                eps: spec.num("eps", Some(d.eps))?,
                nu: spec.get("nu").map(|_| spec.num("nu", None)).transpose()?,
                n: whole(spec.num("n", Some(d.n as f64))?, "n")?,
                q: spec.num("q", Some(d.q))?,
                base: spec.get("base").map_or(Ok(d.base), str::parse)?,
                scale: spec.get("scale").map(|_| spec.num("scale", None)).transpose()?,
            };
            let fam = lower_bound_family(kind, &params)?;
            let member = whole(spec.num("member", Some(0.0))?, "member")?;
            match member {
                0 => Ok(fam.base),
                r if r <= fam.alternates.len() => Ok(fam.alternates[r - 1].clone()),
                r => usage(format!("family has {} alternates, member {r} does not exist", fam.alternates.len())),
            }
        }
        other => usage(format!("unknown generator {other:?} (a | counts | poly | family | graph)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(s: &str) -> Result<GibbsInstance, HarnessError> {
        generate(&s.parse().unwrap())
    }

    #[test]
    fn generators() {
        assert_eq!(gen("a").unwrap(), instance_a());
        let c = gen("counts:c=1|2|1,bmin=0,bmax=1").unwrap();
        assert_eq!(c, instance_a());
        let p = gen("poly:m=2,q=8").unwrap();
        assert_eq!(p.n(), 4.0);
        assert!((p.q() - 8.0).abs() < 1e-6);
        assert_eq!(gen("poly:n=4,q=8").unwrap(), p);
        assert!(gen("poly:n=3").is_err());
        let f = gen("family:kind=delta-pair,member=1").unwrap();
        assert_eq!(f.n(), 4.0);
        assert!(gen("family:kind=delta-pair,member=9").is_err());
        assert!(gen("nothing").is_err());
        assert!(gen("counts:bmin=0").is_err());
    }

    #[test]
    fn graph_problems() {
        let src = InstanceSource::Gen("graph:K4".parse().unwrap());
        let p = resolve(&src, Task::CountMatchings).unwrap();
        assert_eq!(p.graph.unwrap().counts, vec![1, 6, 3]);
        let p = resolve(&InstanceSource::Gen("graph:C4".parse().unwrap()), Task::CountSubgraphs).unwrap();
        // Instance index i counts subgraphs with |E| - i edges.
        assert_eq!(p.graph.unwrap().counts, vec![1, 4]);
        assert!(resolve(&src, Task::RatioAll).is_err());
        assert!(resolve(&InstanceSource::Gen("a".parse().unwrap()), Task::CountMatchings).is_err());
    }
}
