#pragma once

// Low-level kernels shared by the layer graph and by the dense (stride-1)
// descriptor evaluation in the matcher. All buffers are single-sample CHW.

namespace uwstereo::nn::ops {

struct ConvGeometry {
    int in_channels = 0;
    int in_h = 0;
    int in_w = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    int dilation = 1;

    int out_h() const { return (in_h + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1; }
    int out_w() const { return (in_w + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1; }
};

/// out[Cout, Ho, Wo] = weight[Cout, Cin*k*k] * im2col(in) + bias. bias may be null.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out);

/// Accumulates into dweight/dbias/din; any of them may be null.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* in, const T* weight, const T* dout, T* dweight, T* dbias,
                     T* din);

}  // namespace uwstereo::nn::ops
