import logging

from cases.base import CaseDefinition, material_derivative_fd, verify_case
from cases.expanding_circle import expanding_circle_case
from cases.static_box import static_box_case
from cases.translating_disk import translating_disk_case

CASES = {
    "expanding_circle": expanding_circle_case,
    "translating_disk": translating_disk_case,
    "static_box": static_box_case,
}

SOURCE_TOLERANCE = 1e-10


def get_case(name: str, verify: bool = True) -> CaseDefinition:
    if name not in CASES:
        raise KeyError(f"unknown case '{name}', expected one of {sorted(CASES)}")
    case = CASES[name]()
    if verify:
        residual = verify_case(case)["source_residual"]
        if residual > SOURCE_TOLERANCE:
            raise ValueError(f"case {name}: source term inconsistent with the PDE (residual {residual:.3e})")
        logging.getLogger(__name__).debug(f"Case {name} verified, source residual {residual:.2e}")
    return case


__all__ = ["CASES", "CaseDefinition", "get_case", "verify_case", "material_derivative_fd",
           "expanding_circle_case", "translating_disk_case", "static_box_case"]
