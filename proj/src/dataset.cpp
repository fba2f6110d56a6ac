#include "ppou/dataset.hpp"

#include "ppou/errors.hpp"

namespace ppou {

void Dataset::validate() const {
    if (x.rows() == 0) throw InputError("dataset is empty");
    if (y.size() != x.rows()) throw InputError("dataset: x has " + std::to_string(x.rows()) + " rows but y has " +
                                               std::to_string(y.size()) + " labels");
    if (true_noise_std && true_noise_std->size() != x.rows()) throw InputError("dataset: noise std length mismatch");
    if (!x.allFinite() || !y.allFinite()) throw InputError("dataset contains non-finite values");
}

Dataset concat_snapshots(const SnapshotDatabase& db) {
    const Index n = db.num_nodes(), k = db.num_snapshots();
    if (k < 1) throw InputError("snapshot database has no snapshots");
    if (db.labels.rows() != n) throw InputError("snapshot database: label rows differ from node count");
    Dataset out;
    out.x.resize(n * k, db.x.cols());
    out.y.resize(n * k);
    for (Index s = 0; s < k; ++s) {
        out.x.middleRows(s * n, n) = db.x;
        out.y.segment(s * n, n) = db.labels.col(s);
    }
    return out;
}

}  // namespace ppou
