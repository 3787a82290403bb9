#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "wbrake/measure_grid.hpp"

namespace wbrake {

namespace {

// Successive shortest paths on source -> supply cells -> demand cells -> sink.
// Every augmentation exhausts a supply or a demand, so at most 2n rounds.
class MinCostFlow {
public:
    explicit MinCostFlow(int n_nodes) : adj_(n_nodes) {}

    void add_edge(int u, int v, double cap, double cost) {
        adj_[u].push_back(static_cast<int>(edges_.size()));
        edges_.push_back({v, cap, cost});
        adj_[v].push_back(static_cast<int>(edges_.size()));
        edges_.push_back({u, 0.0, -cost});
    }

    double run(int s, int t, double demand) {
        constexpr double kEps = 1e-15;
        const int n = static_cast<int>(adj_.size());
        double flow = 0.0, cost = 0.0;
        while (flow < demand - 1e-14) {
            std::vector<double> dist(n, std::numeric_limits<double>::infinity());
            std::vector<int> via(n, -1);
            dist[s] = 0.0;
            for (int round = 0; round < n; ++round) {
                bool changed = false;
                for (int u = 0; u < n; ++u) {
                    if (!std::isfinite(dist[u])) continue;
                    for (int e : adj_[u]) {
                        const Edge& ed = edges_[e];
                        if (ed.cap <= kEps) continue;
                        const double nd = dist[u] + ed.cost;
                        if (nd < dist[ed.to] - 1e-15) {
                            dist[ed.to] = nd;
                            via[ed.to] = e;
                            changed = true;
                        }
                    }
                }
                if (!changed) break;
            }
            if (via[t] < 0) break;
            double push = demand - flow;
            for (int v = t; v != s; v = edges_[via[v] ^ 1].to) push = std::min(push, edges_[via[v]].cap);
            for (int v = t; v != s; v = edges_[via[v] ^ 1].to) {
                edges_[via[v]].cap -= push;
                edges_[via[v] ^ 1].cap += push;
            }
            flow += push;
            cost += push * dist[t];
        }
        return cost;
    }

private:
    struct Edge {
        int to;
        double cap;
        double cost;
    };
    std::vector<std::vector<int>> adj_;
    std::vector<Edge> edges_;
};

}  // namespace

double d2_lp_oracle(const GridMeasure& mu, const GridMeasure& nu) {
    if (!(mu.grid() == nu.grid())) throw std::invalid_argument("measures live on different grids");
    const Grid1D& g = mu.grid();
    const int n = g.n_cells;
    if (n > 32) throw std::invalid_argument("LP oracle limited to 32 cells");
    const int src = 2 * n, sink = 2 * n + 1;
    MinCostFlow mcf(2 * n + 2);
    for (int i = 0; i < n; ++i) {
        mcf.add_edge(src, i, mu[i] * g.h, 0.0);
        mcf.add_edge(n + i, sink, nu[i] * g.h, 0.0);
    }
    const double big = 2.0;  // total mass is 1
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double dx = g.center(i) - g.center(j);
            mcf.add_edge(i, n + j, big, dx * dx);
        }
    }
    return std::sqrt(std::max(0.0, mcf.run(src, sink, std::min(mu.mass(), nu.mass()))));
}

}  // namespace wbrake
