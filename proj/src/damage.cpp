#include "dappo/damage.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

namespace dappo::damage {
namespace {

int type_index(DamageType t) { return static_cast<int>(t) - 1; }

DamageType type_from_index(int i) {
  if (i < 0) throw InvalidInputError("damage type index out of range");
  return static_cast<DamageType>(i + 1);
}

/// Rank of the pair (a, b), a < b, in lexicographic order over n limbs.
int pair_rank(int a, int b, int n) { return a * (2 * n - a - 1) / 2 + (b - a - 1); }

}  // namespace

long count_classes(int n_limbs, int n_types) {
  if (n_limbs < 1) throw InvalidInputError("count_classes: need at least one limb");
  if (n_types < 0) throw InvalidInputError("count_classes: negative damage type count");
  const long n = n_limbs;
  const long k = n_types;
  return 1 + n * k + n * (n - 1) / 2 * k * k;
}

DamageClass class_from_id(int id, int n_limbs, int n_types) {
  const long total = count_classes(n_limbs, n_types);
  if (id < 0 || id >= total)
    throw InvalidInputError("class_from_id: id " + std::to_string(id) + " outside [0, " +
                            std::to_string(total) + ")");
  DamageClass cls;
  cls.class_id = id;
  if (id == 0) return cls;

  const int k = n_types;
  const int singles = n_limbs * k;
  if (id <= singles) {
    const int s = id - 1;
    cls.assignments.push_back({s / k, type_from_index(s % k), 0});
    return cls;
  }

  int p = id - 1 - singles;
  const int block = k * k;
  int pair = p / block;
  const int within = p % block;
  for (int a = 0; a < n_limbs; ++a) {
    const int row = n_limbs - a - 1;
    if (pair < row) {
      const int b = a + 1 + pair;
      cls.assignments.push_back({a, type_from_index(within / k), 0});
      cls.assignments.push_back({b, type_from_index(within % k), 0});
      return cls;
    }
    pair -= row;
  }
  throw InvalidInputError("class_from_id: unreachable pair index");
}

int id_from_class(const DamageClass& cls, int n_limbs, int n_types) {
  validate(cls, n_limbs, 1 << 30);
  const int k = n_types;
  for (const auto& a : cls.assignments)
    if (type_index(a.type) >= k)
      throw InvalidInputError("id_from_class: damage type outside the configured type count");

  if (cls.assignments.empty()) return 0;
  if (cls.assignments.size() == 1) {
    const auto& a = cls.assignments.front();
    return 1 + a.limb * k + type_index(a.type);
  }
  Assignment lo = cls.assignments[0];
  Assignment hi = cls.assignments[1];
  if (lo.limb > hi.limb) std::swap(lo, hi);
  return 1 + n_limbs * k + pair_rank(lo.limb, hi.limb, n_limbs) * k * k +
         type_index(lo.type) * k + type_index(hi.type);
}

Vector encode(const DamageClass& cls, int n_limbs) {
  validate(cls, n_limbs, 1 << 30);
  Vector enc = Vector::Zero(2 * n_limbs);
  for (const auto& a : cls.assignments) {
    const int slot = type_index(a.type);
    if (slot < 0 || slot > 1)
      throw InvalidInputError("encode: only two damage types fit a limb tuple");
    enc(2 * a.limb + slot) = 1.0;
  }
  return enc;
}

DamageClass decode(const Vector& encoding, int n_limbs) {
  if (encoding.size() != 2 * n_limbs)
    throw InvalidInputError("decode: encoding length must be 2 * n_limbs");
  DamageClass cls;
  for (int limb = 0; limb < n_limbs; ++limb) {
    const Real a = encoding(2 * limb);
    const Real b = encoding(2 * limb + 1);
    if ((a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0))
      throw InvalidInputError("decode: encoding entries must be 0 or 1");
    if (a == 1.0 && b == 1.0)
      throw InvalidInputError("decode: limb tuple [1,1] is excluded (one damage per limb)");
    if (a == 1.0) cls.assignments.push_back({limb, DamageType::kJammedJoint, 0});
    if (b == 1.0) cls.assignments.push_back({limb, DamageType::kMissingToe, 0});
  }
  if (cls.assignments.size() > 2)
    throw InvalidInputError("decode: more than two damaged limbs");
  cls.class_id = id_from_class(cls, n_limbs, 2);
  return cls;
}

void validate(const DamageClass& cls, int n_limbs, int joints_per_limb) {
  if (cls.assignments.size() > 2)
    throw InvalidInputError("damage class: at most two simultaneous damages");
  for (const auto& a : cls.assignments) {
    if (a.limb < 0 || a.limb >= n_limbs)
      throw InvalidInputError("damage class: limb index " + std::to_string(a.limb) +
                              " outside [0, " + std::to_string(n_limbs) + ")");
    if (a.type == DamageType::kJammedJoint && (a.joint < 0 || a.joint >= joints_per_limb))
      throw InvalidInputError("damage class: jammed joint index out of range");
  }
  if (cls.assignments.size() == 2 && cls.assignments[0].limb == cls.assignments[1].limb)
    throw InvalidInputError("damage class: only one damage can occur on a limb at a time");
  if (cls.assignments.empty() && cls.class_id != 0)
    throw InvalidInputError("damage class: healthy class must have id 0");
}

nlohmann::json to_json(const DamageClass& cls) {
  nlohmann::json assignments = nlohmann::json::array();
  for (const auto& a : cls.assignments) {
    assignments.push_back({{"limb", a.limb},
                           {"type", a.type == DamageType::kJammedJoint ? "jam" : "missing_toe"}});
  }
  return {{"class_id", cls.class_id}, {"assignments", assignments}};
}

DamageClass damage_class_from_json(const nlohmann::json& j, int n_limbs, int n_types) {
  DamageClass cls;
  for (const auto& item : j.at("assignments")) {
    Assignment a;
    a.limb = item.at("limb").get<int>();
    const std::string type = item.at("type").get<std::string>();
    if (type == "jam")
      a.type = DamageType::kJammedJoint;
    else if (type == "missing_toe")
      a.type = DamageType::kMissingToe;
    else
      throw InvalidInputError("damage class json: unknown type '" + type + "'");
    cls.assignments.push_back(a);
  }
  cls.class_id = id_from_class(cls, n_limbs, n_types);
  if (j.contains("class_id") && j.at("class_id").get<int>() != cls.class_id)
    throw InvalidInputError("damage class json: class_id does not match assignments");
  return cls;
}

}  // namespace dappo::damage
