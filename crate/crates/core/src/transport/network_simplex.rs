//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Spanning-tree representation with thread/successor lists and block-search pricing, in the
//! style of LEMON's `NetworkSimplex`. Supply nodes are `0..m`, demand nodes `m..m+n`, and one
//! extra root node carries the artificial arcs of the initial strongly feasible tree. Real arc
//! `e` goes from `e / n` to `m + e % n`.

const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;

const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

const NONE: usize = usize::MAX;

#[derive(Debug)]
pub(crate) struct SimplexSolution {
    /// Row-major `m x n` flow.
    pub flow: Vec<f64>,
    #[cfg(test)]
    pub objective: f64,
}

#[derive(Debug)]
pub(crate) enum SimplexFailure {
    Infeasible(f64),
    PivotLimit(usize),
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    node_num: usize,
    arc_num: usize,
    all_arc_num: usize,
    cost: &'a [f64],

    art_source: Vec<usize>,
    art_target: Vec<usize>,
    art_cost: Vec<f64>,

    flow: Vec<f64>,
    state: Vec<i8>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<isize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,

    root: usize,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,

    block_size: usize,
    next_arc: usize,
    price_tol: f64,
}

impl<'a> Simplex<'a> {
    fn new(supply: &[f64], demand: &[f64], cost: &'a [f64]) -> Self {
        let m = supply.len();
        let n = demand.len();
        let node_num = m + n;
        let arc_num = m * n;
        let all_node_num = node_num + 1;
        let all_arc_num = arc_num + node_num;

        let max_cost = cost.iter().fold(0.0f64, |acc, &c| acc.max(c.abs()));
        let art_cost_value = (max_cost + 1.0) * node_num as f64;

        let mut s = Simplex {
            m,
            n,
            node_num,
            arc_num,
            all_arc_num,
            cost,
            art_source: vec![0; node_num],
            art_target: vec![0; node_num],
            art_cost: vec![0.0; node_num],
            flow: vec![0.0; all_arc_num],
            state: vec![STATE_LOWER; all_arc_num],
            parent: vec![NONE; all_node_num],
            pred: vec![NONE; all_node_num],
            thread: vec![0; all_node_num],
            rev_thread: vec![0; all_node_num],
            succ_num: vec![0; all_node_num],
            last_succ: vec![0; all_node_num],
            pred_dir: vec![DIR_UP; all_node_num],
            pi: vec![0.0; all_node_num],
            dirty_revs: Vec::new(),
            root: node_num,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            price_tol: 64.0 * f64::EPSILON * art_cost_value,
        };

        let root = s.root;
        s.parent[root] = NONE;
        s.pred[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = all_node_num as isize;
        s.last_succ[root] = root - 1;
        s.pi[root] = 0.0;

        for u in 0..node_num {
            let e = arc_num + u;
            let supply_u = if u < m { supply[u] } else { -demand[u - m] };
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            let a = u;
            if supply_u >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.art_source[a] = u;
                s.art_target[a] = root;
                s.flow[e] = supply_u;
                s.art_cost[a] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost_value;
                s.art_source[a] = root;
                s.art_target[a] = u;
                s.flow[e] = -supply_u;
                s.art_cost[a] = art_cost_value;
            }
        }
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.n
        } else {
            self.art_source[e - self.arc_num]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.m + e % self.n
        } else {
            self.art_target[e - self.arc_num]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.cost[e]
        } else {
            self.art_cost[e - self.arc_num]
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        // only called for real arcs
        let i = e / self.n;
        let j = self.m + e % self.n;
        f64::from(self.state[e]) * (self.cost[e] + self.pi[i] - self.pi[j])
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.price_tol;
        let mut found = false;
        let mut cnt = self.block_size;
        let search = self.arc_num;

        let mut e = self.next_arc;
        while e < search {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e + 1;
                    return true;
                }
                cnt = self.block_size;
            }
            e += 1;
        }
        e = 0;
        while e < self.next_arc {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e + 1;
                    return true;
                }
                cnt = self.block_size;
            }
            e += 1;
        }
        if found {
            self.next_arc = e;
            if self.next_arc >= search {
                self.next_arc = 0;
            }
        }
        found
    }

    fn find_join(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Chooses the leaving arc by the strongly-feasible rule. Returns false if the cycle is
    /// unbounded, which cannot happen with nonnegative flows and finite supplies.
    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source(self.in_arc), self.target(self.in_arc))
        } else {
            (self.target(self.in_arc), self.source(self.in_arc))
        };
        self.delta = f64::INFINITY;
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP {
                self.flow[e]
            } else {
                f64::INFINITY
            };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_DOWN {
                self.flow[e]
            } else {
                f64::INFINITY
            };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }

        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0 && self.delta.is_finite()
    }

    fn change_flow(&mut self) {
        if self.delta > 0.0 {
            let val = f64::from(self.state[self.in_arc]) * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.state[out] = if self.flow[out] == 0.0 {
            STATE_LOWER
        } else {
            STATE_UPPER
        };
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            // old_rev_thread == v_in also means join == v_out
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // re-hang the stem nodes between u_in and u_out
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc: isize = 0;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            let mut p = self.parent[u];
            while u != u_in {
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
                p = self.parent[u];
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let join = self.join;
        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in]
            - self.pi[u_in]
            - f64::from(self.pred_dir[u_in]) * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }
}

/// Solves `min <G, C>` subject to `G 1 = supply`, `G^T 1 = demand`, `G >= 0`.
///
/// `cost` is row-major `m x n`. Supplies and demands must be nonnegative with (nearly) equal
/// totals; the residual imbalance is absorbed by the artificial arcs and reported as infeasible
/// if it exceeds `feasibility_tol`.
pub(crate) fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
    feasibility_tol: f64,
    max_pivots: usize,
) -> Result<SimplexSolution, SimplexFailure> {
    let m = supply.len();
    let n = demand.len();
    debug_assert_eq!(cost.len(), m * n);

    let mut s = Simplex::new(supply, demand, cost);
    let mut pivots = 0usize;
    while s.find_entering_arc() {
        s.find_join();
        if !s.find_leaving_arc() {
            // uncapacitated cycle with no decreasing arc; impossible for a transportation problem
            return Err(SimplexFailure::Infeasible(f64::INFINITY));
        }
        s.change_flow();
        s.update_tree_structure();
        s.update_potential();
        pivots += 1;
        if pivots > max_pivots {
            return Err(SimplexFailure::PivotLimit(pivots));
        }
    }

    let residual = (s.arc_num..s.all_arc_num)
        .map(|e| s.flow[e].abs())
        .fold(0.0, f64::max);
    if residual > feasibility_tol {
        return Err(SimplexFailure::Infeasible(residual));
    }
    debug_assert_eq!(s.node_num, m + n);

    let mut flow = s.flow;
    flow.truncate(s.arc_num);
    Ok(SimplexSolution {
        #[cfg(test)]
        objective: flow.iter().zip(cost).map(|(f, c)| f * c).sum(),
        flow,
    })
}
