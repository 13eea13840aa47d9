#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>

namespace animate4d {

/// Quaternions are stored scalar-first: (w, x, y, z).
using Quat = Eigen::Vector4d;

inline Quat identity_quat() { return {1.0, 0.0, 0.0, 0.0}; }

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Eigen::Matrix3d quat_to_matrix(const Quat& q)
{
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Adjoint of quat_to_matrix: maps dL/dR to dL/dq for the (already unit) quaternion q.
inline Quat quat_to_matrix_backward(const Quat& q, const Eigen::Matrix3d& g)
{
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Quat d;
    d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                w * g(2, 1) - 2 * x * g(2, 2));
    d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                z * g(2, 1) - 2 * y * g(2, 2));
    d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                x * g(2, 0) + y * g(2, 1));
    return d;
}

/// Adjoint of q -> q / |q|.
inline Quat normalize_backward(const Quat& raw, const Quat& grad_unit)
{
    const double n = raw.norm();
    const Quat u = raw / n;
    return (grad_unit - u * u.dot(grad_unit)) / n;
}

inline Quat quat_multiply(const Quat& a, const Quat& b)
{
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

inline Quat axis_angle_quat(const Eigen::Vector3d& axis, double angle)
{
    const Eigen::Vector3d a = axis.normalized();
    const double s = std::sin(angle / 2);
    return {std::cos(angle / 2), a.x() * s, a.y() * s, a.z() * s};
}

} // namespace animate4d
