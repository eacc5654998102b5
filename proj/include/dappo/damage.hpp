#pragma once

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dappo/types.hpp"

namespace dappo::damage {

/// The two damage types applied to a limb. Numeric values match the slot the
/// type occupies in a limb's encoding tuple.
enum class DamageType : int { kJammedJoint = 1, kMissingToe = 2 };

struct Assignment {
  int limb = 0;
  DamageType type = DamageType::kJammedJoint;
  /// Joint within the limb affected by a jam. The canonical enumeration uses
  /// the representative joint 0; damage types are counted per limb, not per
  /// joint, which is what makes the class totals 33 and 73.
  int joint = 0;

  friend bool operator==(const Assignment& a, const Assignment& b) {
    return a.limb == b.limb && a.type == b.type && a.joint == b.joint;
  }
};

/// One enumerated damage configuration: healthy, a single limb damage, or a
/// pair of damages on distinct limbs.
struct DamageClass {
  int class_id = 0;
  std::vector<Assignment> assignments;

  bool healthy() const { return assignments.empty(); }

  friend bool operator==(const DamageClass& a, const DamageClass& b) {
    return a.class_id == b.class_id && a.assignments == b.assignments;
  }
};

/// Number of damage classes for n limbs and k damage types:
/// D = C(n,0) k^0 + C(n,1) k^1 + C(n,2) k^2.
long count_classes(int n_limbs, int n_types);

/// Canonical id -> class. Order: id 0 healthy; single damages by
/// (limb, type); pairs by (limb_a, limb_b, type_a, type_b) with
/// limb_a < limb_b. Throws InvalidInputError for id outside [0, D).
DamageClass class_from_id(int id, int n_limbs, int n_types);

/// Inverse of class_from_id under the canonical ordering.
int id_from_class(const DamageClass& cls, int n_limbs, int n_types);

/// Partial one-hot vector of length 2n: limb i owns indices (2i, 2i+1);
/// [1,0] marks a jammed joint, [0,1] a missing toe, [0,0] no damage.
Vector encode(const DamageClass& cls, int n_limbs);

/// Inverse of encode (for k = 2). A [1,1] limb tuple is rejected.
DamageClass decode(const Vector& encoding, int n_limbs);

/// Checks limb indices, joint indices, distinctness, and the two-damage cap.
void validate(const DamageClass& cls, int n_limbs, int joints_per_limb);

nlohmann::json to_json(const DamageClass& cls);
DamageClass damage_class_from_json(const nlohmann::json& j, int n_limbs, int n_types);

}  // namespace dappo::damage
