use super::{CostModel, MobilityError, MobilityNetwork, MuleFlow};
use crate::lp::{LinearProgram, LpError, Relation};

/// Optimal route fractions, split rates (packets per slot) and objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub fractions: Vec<f64>,
    /// y[flow][route], packets per slot.
    pub splits: Vec<Vec<f64>>,
    /// K·(Σ a·y + Σ b·f).
    pub cost: f64,
}

struct Layout {
    routes: usize,
    // (flow, route, variable) for each route that reaches the flow's source
    z: Vec<(usize, usize, usize)>,
    vars: usize,
}

fn layout(net: &MobilityNetwork, flows: &[MuleFlow]) -> Layout {
    let routes = net.routes.len();
    let mut z = Vec::new();
    let mut v = routes;
    for (f, flow) in flows.iter().enumerate() {
        for j in 0..routes {
            if net.pickup_rate(flow.source, j) > 0.0 {
                z.push((f, j, v));
                v += 1;
            }
        }
    }
    Layout { routes, z, vars: v }
}

/// Feasible region with z = δ·f substituted: 0 ≤ z ≤ f makes every constraint linear.
fn constraints(
    net: &MobilityNetwork,
    flows: &[MuleFlow],
    forced: Option<&[f64]>,
    lay: &Layout,
    extra: usize,
) -> LinearProgram {
    let n = lay.vars + extra;
    let mut lp = LinearProgram::new(n);
    for (f, flow) in flows.iter().enumerate() {
        let terms: Vec<_> = lay
            .z
            .iter()
            .filter(|e| e.0 == f)
            .map(|&(_, j, v)| (v, net.pickup_rate(flow.source, j)))
            .collect();
        lp.constrain_terms(&terms, Relation::Eq, flow.rate);
    }
    for m in 0..net.mobiles().max(1) {
        let terms: Vec<_> =
            (0..lay.routes).filter(|&j| net.routes[j].mobile == m).map(|j| (j, 1.0)).collect();
        lp.constrain_terms(&terms, Relation::Le, 1.0);
        // what this mobile picks up for a destination it must also drop there
        for dest in 0..net.stationaries.len() {
            if !flows.iter().any(|fl| fl.dest == dest) {
                continue;
            }
            let mut terms = Vec::new();
            for &(f, j, v) in &lay.z {
                if flows[f].dest == dest && net.routes[j].mobile == m {
                    terms.push((v, net.pickup_rate(flows[f].source, j)));
                }
            }
            for j in (0..lay.routes).filter(|&j| net.routes[j].mobile == m) {
                terms.push((j, -net.dropoff_rate(dest, j)));
            }
            lp.constrain_terms(&terms, Relation::Le, 0.0);
        }
    }
    for (j, r) in net.routes.iter().enumerate() {
        if r.floor > 0.0 {
            lp.constrain_terms(&[(j, 1.0)], Relation::Ge, r.floor);
        }
        if let Some(target) = forced {
            lp.constrain_terms(&[(j, 1.0)], Relation::Eq, target[j]);
        }
    }
    for &(_, j, v) in &lay.z {
        lp.constrain_terms(&[(v, 1.0), (j, -1.0)], Relation::Le, 0.0);
    }
    lp
}

fn cost_terms(net: &MobilityNetwork, costs: &CostModel, flows: &[MuleFlow], lay: &Layout) -> Vec<(usize, f64)> {
    let mut terms = Vec::new();
    for (j, r) in net.routes.iter().enumerate() {
        terms.push((j, costs.k * r.cost));
    }
    for &(f, j, v) in &lay.z {
        let l = flows[f].source;
        terms.push((v, costs.k * costs.pickup_cost(l, j) * net.pickup_rate(l, j)));
    }
    terms
}

/// Minimum-cost fractions and splits. Among cost-optimal points the one with
/// the smallest largest route fraction is returned, which makes degenerate
/// optima reproducible.
pub fn reference_lp_solve(
    net: &MobilityNetwork,
    flows: &[MuleFlow],
    costs: &CostModel,
) -> Result<LpOutcome, MobilityError> {
    let lay = layout(net, flows);
    let mut lp = constraints(net, flows, None, &lay, 0);
    let terms = cost_terms(net, costs, flows, &lay);
    let mut c = vec![0.0; lay.vars];
    for &(v, w) in &terms {
        c[v] += w;
    }
    lp.set_cost(c).expect("sized by layout");
    let first = lp.solve().map_err(lp_err)?;
    let best = first.objective;

    // second pass over the optimal face: minimize the largest fraction
    let top = lay.vars;
    let mut lp = constraints(net, flows, None, &lay, 1);
    lp.constrain_terms(&terms, Relation::Le, best + 1e-9 * best.abs().max(1.0));
    for j in 0..lay.routes {
        lp.constrain_terms(&[(j, 1.0), (top, -1.0)], Relation::Le, 0.0);
    }
    let mut c = vec![0.0; lay.vars + 1];
    c[top] = 1.0;
    lp.set_cost(c).expect("sized by layout");
    let x = match lp.solve() {
        Ok(s) => s.x,
        Err(_) => first.x,
    };

    let fractions = x[..lay.routes].to_vec();
    let mut splits = vec![vec![0.0; lay.routes]; flows.len()];
    for &(f, j, v) in &lay.z {
        splits[f][j] = x[v] * net.pickup_rate(flows[f].source, j);
    }
    let cost = terms.iter().map(|&(v, w)| w * x[v]).sum();
    Ok(LpOutcome { fractions, splits, cost })
}

/// Whether some (f, y, δ) carries `flows`; `forced` pins the route fractions.
pub fn supportability_check(net: &MobilityNetwork, flows: &[MuleFlow], forced: Option<&[f64]>) -> bool {
    let lay = layout(net, flows);
    constraints(net, flows, forced, &lay, 0).solve().is_ok()
}

fn lp_err(e: LpError) -> MobilityError {
    match e {
        LpError::Infeasible => MobilityError::Infeasible,
        other => MobilityError::Invalid(other.to_string()),
    }
}
