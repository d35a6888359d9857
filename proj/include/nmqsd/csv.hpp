#pragma once

#include "nmqsd/ensemble.hpp"

#include <filesystem>
#include <string_view>

namespace nmqsd {

inline constexpr std::string_view kObservableCsvHeader =
    "t,Jx,Jx_se,Jy,Jy_se,Jz,Jz_se,purity,purity_se,rho00,rho11,rho22,"
    "re_rho01,im_rho01,re_rho02,im_rho02,re_rho12,im_rho12,n_traj";

// 17 significant digits; matrix indices follow the (|2>, |1>, |0>) basis order.
std::string format_csv(const ObservableSeries& series);
void export_csv(const ObservableSeries& series, const std::filesystem::path& path);

// Inverse of format_csv. Throws ShapeError on a header or column mismatch.
ObservableSeries parse_csv(std::string_view text);
ObservableSeries read_csv(const std::filesystem::path& path);

} // namespace nmqsd
