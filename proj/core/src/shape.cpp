#include "shapegem/shape.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "shapegem/errors.hpp"

namespace shapegem {

ShapeDataset::ShapeDataset(Eigen::MatrixXd shapes_in) : shapes(std::move(shapes_in)) {
    if (shapes.rows() % 3 != 0 || shapes.rows() == 0) {
        throw DimensionError("shape dataset rows must be a positive multiple of 3");
    }
    if (shapes.cols() < 2) {
        throw DimensionError("shape dataset needs at least 2 shapes");
    }
    if (!shapes.allFinite()) {
        throw DimensionError("shape dataset contains non-finite values");
    }
    m = static_cast<int>(shapes.rows()) / 3;
}

Eigen::VectorXd read_landmarks_csv(const std::string& path) {
    std::ifstream stream(path);
    if (!stream) {
        throw FormatError("cannot open landmark CSV: " + path);
    }
    std::string line;
    std::vector<double> coords;
    bool first = true;
    while (std::getline(stream, line)) {
        if (line.empty()) {
            continue;
        }
        if (first) {
            first = false;
            if (line.rfind("index", 0) == 0) {
                continue;
            }
        }
        long index = 0;
        double x = 0, y = 0, z = 0;
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf", &index, &x, &y, &z) != 4) {
            throw FormatError("bad landmark CSV row in " + path + ": " + line);
        }
        coords.push_back(x);
        coords.push_back(y);
        coords.push_back(z);
    }
    if (coords.empty()) {
        throw FormatError("landmark CSV has no rows: " + path);
    }
    Eigen::VectorXd shape(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) {
        shape[static_cast<Eigen::Index>(i)] = coords[i];
    }
    return shape;
}

void write_landmarks_csv(const Eigen::VectorXd& shape, const std::string& path) {
    if (shape.size() % 3 != 0) {
        throw DimensionError("shape length must be a multiple of 3");
    }
    std::ofstream stream(path);
    if (!stream) {
        throw FormatError("cannot write landmark CSV: " + path);
    }
    stream << "index,x,y,z\n";
    std::ostringstream row;
    row.precision(17);
    for (int i = 0; i < landmark_count(shape); ++i) {
        row.str("");
        row << i << "," << shape[3 * i] << "," << shape[3 * i + 1] << ","
            << shape[3 * i + 2] << "\n";
        stream << row.str();
    }
}

} // namespace shapegem
