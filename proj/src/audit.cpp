#include "scet/audit.hpp"

#include <iomanip>
#include <sstream>

namespace scet {

std::string render_text(const CostReport& report) {
    std::ostringstream os;
    std::size_t width = 10;
    for (const auto& row : report.rows) width = std::max(width, row.name.size());
    os << std::left << std::setw(static_cast<int>(width + 2)) << "submodule"
       << std::right << std::setw(12) << "params" << std::setw(16) << "multiadds" << "\n";
    for (const auto& row : report.rows)
        os << std::left << std::setw(static_cast<int>(width + 2)) << row.name
           << std::right << std::setw(12) << row.params << std::setw(16) << row.multiadds << "\n";
    os << std::left << std::setw(static_cast<int>(width + 2)) << "total"
       << std::right << std::setw(12) << report.total_params << std::setw(16) << report.total_multiadds << "\n";
    os << "multiadds at HR " << report.hr_width << "x" << report.hr_height << ": "
       << std::fixed << std::setprecision(2) << static_cast<double>(report.total_multiadds) / 1e9 << "G\n";
    return os.str();
}

std::string render_csv(const CostReport& report) {
    std::ostringstream os;
    os << "name,params,multiadds\n";
    for (const auto& row : report.rows)
        os << row.name << "," << row.params << "," << row.multiadds << "\n";
    os << "total," << report.total_params << "," << report.total_multiadds << "\n";
    return os.str();
}

}  // namespace scet
