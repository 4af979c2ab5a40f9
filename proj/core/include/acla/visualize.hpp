#pragma once

#include <string>

#include "acla/model.hpp"

namespace acla {

// Key-selection visualization for one query position: per (module, referred
// layer) an annotated image (query cross, one circle per surviving key with
// intensity proportional to its attention weight) plus a CSV with columns
// module,layer,key,row,col,weight,beta,m.  Image markers correspond 1:1 to
// CSV rows.
struct VisualizeResult {
    std::vector<std::string> image_files;
    std::string csv_file;
    int csv_rows = 0;
};

VisualizeResult visualize_keys(RestorationModel& model, const ExperimentConfig& cfg,
                               const Tensor& image, int query_row, int query_col,
                               const std::string& out_dir, bool force_masks_on = false);

}  // namespace acla
