#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bafc/errors.hpp"

namespace bafc {

// Dense channel-major feature tensor. float is the working precision;
// the double instantiation exists for gradient checking.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    Tensor(int channels, int height, int width, T fill = T(0))
        : channels_(channels), height_(height), width_(width),
          data_(checked_size(channels, height, width), fill) {}

    static Tensor from_data(int channels, int height, int width, std::vector<T> data) {
        Tensor t;
        if (channels < 0 || height < 0 || width < 0)
            throw ShapeError("tensor dims must be non-negative");
        if (data.size() != static_cast<std::size_t>(channels) * height * width)
            throw ShapeError("tensor data length does not match dims");
        t.channels_ = channels;
        t.height_ = height;
        t.width_ = width;
        t.data_ = std::move(data);
        return t;
    }

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

    T& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    const T& at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    T* channel_ptr(int c) { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }
    const T* channel_ptr(int c) const { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const Tensor& o) const {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>::from_data(channels_, height_, width_, std::move(out));
    }

private:
    static std::size_t checked_size(int c, int h, int w) {
        if (c < 0 || h < 0 || w < 0) throw ShapeError("tensor dims must be non-negative");
        return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }

    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// FTEN fixture file: "FTEN" magic, version byte, channels/height/width as
// u32 little-endian, then f32 little-endian samples, channel-major.
std::vector<std::uint8_t> ften_bytes(const Tensor<float>& t);
Tensor<float> parse_ften(const std::uint8_t* data, std::size_t size);
void write_ften(const std::string& path, const Tensor<float>& t);
Tensor<float> read_ften(const std::string& path);

} // namespace bafc
