#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

#include "moca/dataio.hpp"

namespace moca {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) | (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) | static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

std::size_t IdxTensor::item_size() const noexcept {
    std::size_t s = 1;
    for (std::size_t i = 1; i < dims.size(); ++i) s *= dims[i];
    return s;
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
    using Kind = IdxError::Kind;
    if (bytes.size() < 4) throw IdxError(Kind::truncated_payload, "IDX: file shorter than the 4-byte magic");
    IdxTensor t;
    t.magic = read_be32(bytes, 0);
    std::size_t ndims = 0;
    if (t.magic == kIdxMagicImages) {
        ndims = 3;
    } else if (t.magic == kIdxMagicLabels) {
        ndims = 1;
    } else {
        char buf[11];
        std::snprintf(buf, sizeof buf, "0x%08x", t.magic);
        throw IdxError(Kind::bad_magic, std::string("IDX: unsupported magic ") + buf);
    }
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) throw IdxError(Kind::truncated_payload, "IDX: header truncated");

    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::uint32_t dim = read_be32(bytes, 4 + 4 * i);
        t.dims.push_back(dim);
        if (dim != 0 && total > std::numeric_limits<std::size_t>::max() / dim) {
            throw IdxError(Kind::size_overflow, "IDX: declared size overflows");
        }
        total *= dim;
    }
    if (total > std::numeric_limits<std::size_t>::max() - header) {
        throw IdxError(Kind::size_overflow, "IDX: declared size overflows");
    }
    const std::size_t payload = bytes.size() - header;
    if (payload < total) {
        throw IdxError(Kind::truncated_payload, "IDX: declared " + std::to_string(total) + " payload bytes, found " +
                                                    std::to_string(payload));
    }
    if (payload > total) {
        throw IdxError(Kind::trailing_bytes, "IDX: " + std::to_string(payload - total) + " bytes after the payload");
    }
    t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return t;
}

IdxTensor read_idx_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return parse_idx(bytes);
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor) {
    std::vector<std::uint8_t> out;
    write_be32(out, tensor.magic);
    for (auto d : tensor.dims) write_be32(out, d);
    out.insert(out.end(), tensor.data.begin(), tensor.data.end());
    return out;
}

namespace {

std::vector<std::vector<Example>> split_by_task(const IdxTensor& images, const IdxTensor& labels, std::size_t tasks,
                                                std::size_t classes_per_task, const char* which) {
    if (images.magic != kIdxMagicImages) throw ConfigError(std::string(which) + ": image file must be 3-dimensional");
    if (labels.magic != kIdxMagicLabels) throw ConfigError(std::string(which) + ": label file must be 1-dimensional");
    if (images.items() != labels.items()) {
        throw ConfigError(std::string(which) + ": " + std::to_string(images.items()) + " images but " +
                          std::to_string(labels.items()) + " labels");
    }
    const std::size_t k = tasks * classes_per_task;
    const std::size_t width = images.item_size();
    std::vector<std::vector<Example>> per_class(k);
    for (std::size_t i = 0; i < labels.items(); ++i) {
        const std::size_t label = labels.data[i];
        if (label >= k) {
            throw LabelOutOfRange(std::string(which) + ": label " + std::to_string(label) + " at index " +
                                  std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
        }
        Example ex;
        ex.label = label;
        ex.task = label / classes_per_task;
        ex.input.resize(width);
        const std::uint8_t* px = images.data.data() + i * width;
        for (std::size_t c = 0; c < width; ++c) ex.input[c] = static_cast<double>(px[c]) / 255.0;
        per_class[label].push_back(std::move(ex));
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (per_class[c].empty()) throw ConfigError(std::string(which) + ": class " + std::to_string(c) + " is absent");
    }
    std::vector<std::vector<Example>> per_task(tasks);
    for (std::size_t c = 0; c < k; ++c) {
        auto& dst = per_task[c / classes_per_task];
        for (auto& ex : per_class[c]) dst.push_back(std::move(ex));
    }
    return per_task;
}

}  // namespace

TaskStream build_split_stream(const IdxTensor& train_images, const IdxTensor& train_labels,
                              const IdxTensor& test_images, const IdxTensor& test_labels, std::size_t tasks,
                              std::size_t classes_per_task) {
    if (tasks == 0 || classes_per_task == 0) throw ConfigError("build_split_stream: tasks and classes must be positive");
    if (train_images.item_size() != test_images.item_size()) {
        throw ConfigError("build_split_stream: train and test images differ in size");
    }
    auto train = split_by_task(train_images, train_labels, tasks, classes_per_task, "train");
    auto test = split_by_task(test_images, test_labels, tasks, classes_per_task, "test");
    TaskStream stream;
    stream.num_classes = tasks * classes_per_task;
    stream.input_dim = train_images.item_size();
    std::size_t train_id = 0, test_id = 0;
    for (std::size_t t = 0; t < tasks; ++t) {
        Task task;
        for (std::size_t c = t * classes_per_task; c < (t + 1) * classes_per_task; ++c) task.classes.push_back(c);
        task.train = std::move(train[t]);
        task.test = std::move(test[t]);
        for (auto& ex : task.train) ex.id = train_id++;
        for (auto& ex : task.test) ex.id = test_id++;
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

}  // namespace moca
