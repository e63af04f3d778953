"""Binary labels for scan sessions via closest-visit matching.

A session is matched to the clinical visit nearest in time.  Sessions
matched to a cognitively-normal visit are positive (class 1) when the
subject is later diagnosed with AD dementia, otherwise negative.
Sessions matched to an AD-dementia visit are excluded under scheme A
and folded into class 0 under scheme B.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ManifestError
from .volume_io import ClinicalVisit, ScanSession, SubjectRecord

SCHEME_A = "A_exclude_developed_ad"
SCHEME_B = "B_include_developed_ad"
SCHEMES = (SCHEME_A, SCHEME_B)

CLASS0 = "class0"
CLASS1 = "class1"
EXCLUDED = "excluded"

REASON_PRECLINICAL = "preclinical_conversion"
REASON_HEALTHY = "healthy_no_conversion"
REASON_NON_AD = "non_ad_dementia"
REASON_DEVELOPED_EXCLUDED = "developed_ad_excluded"
REASON_DEVELOPED_CLASS0 = "developed_ad_class0"


@dataclass(frozen=True)
class LabelDecision:
    session: ScanSession
    label: str
    matched_visit: ClinicalVisit
    reason: str

    @property
    def label_int(self) -> int:
        """0/1 class index; raises for excluded decisions."""
        if self.label == CLASS0:
            return 0
        if self.label == CLASS1:
            return 1
        raise ValueError("excluded decision has no class index")


@dataclass(frozen=True)
class LeadTimes:
    to_first_uncertain: int | None
    to_first_ad: int | None


def match_closest_visit(session_day: int, visits: list[ClinicalVisit]) -> ClinicalVisit:
    """Visit minimizing |visit.day - session_day|, ties toward the earlier visit."""
    if not visits:
        raise ManifestError("cannot match a session against zero visits")
    return min(visits, key=lambda v: (abs(v.day - session_day), v.day))


def _check_membership(subject: SubjectRecord, session: ScanSession) -> None:
    if session.subject_id != subject.subject_id or session not in subject.sessions:
        raise ManifestError(
            f"session {session.volume_path!r} does not belong to "
            f"subject {subject.subject_id!r}")


def assign_label(subject: SubjectRecord, session: ScanSession,
                 scheme: str = SCHEME_A) -> LabelDecision:
    if scheme not in SCHEMES:
        raise ManifestError(f"unknown labeling scheme {scheme!r}")
    _check_membership(subject, session)

    matched = match_closest_visit(session.day, subject.visits)
    if matched.diagnosis == "cognitively_normal":
        later_ad = any(
            v.day > session.day and v.diagnosis == "ad_dementia"
            for v in subject.visits
        )
        if later_ad:
            return LabelDecision(session, CLASS1, matched, REASON_PRECLINICAL)
        return LabelDecision(session, CLASS0, matched, REASON_HEALTHY)
    if matched.diagnosis == "ad_dementia":
        if scheme == SCHEME_A:
            return LabelDecision(session, EXCLUDED, matched, REASON_DEVELOPED_EXCLUDED)
        return LabelDecision(session, CLASS0, matched, REASON_DEVELOPED_CLASS0)
    # uncertain_dementia, non_ad_dementia, other
    return LabelDecision(session, CLASS0, matched, REASON_NON_AD)


def lead_time_days(subject: SubjectRecord, session: ScanSession) -> LeadTimes:
    """Days from the scan to the first later uncertain-dementia / AD visit."""
    _check_membership(subject, session)

    def first_after(diagnosis: str) -> int | None:
        days = [v.day for v in subject.visits
                if v.day > session.day and v.diagnosis == diagnosis]
        return min(days) - session.day if days else None

    return LeadTimes(
        to_first_uncertain=first_after("uncertain_dementia"),
        to_first_ad=first_after("ad_dementia"),
    )


def label_sessions(subjects: list[SubjectRecord],
                   scheme: str = SCHEME_A) -> list[LabelDecision]:
    """Label every session of every subject, in canonical manifest order."""
    decisions = []
    for subject in subjects:
        for session in subject.sessions:
            decisions.append(assign_label(subject, session, scheme))
    return decisions


def summarize_decisions(decisions: list[LabelDecision]) -> dict:
    return {
        "class0_count": sum(1 for d in decisions if d.label == CLASS0),
        "class1_count": sum(1 for d in decisions if d.label == CLASS1),
        "excluded_count": sum(1 for d in decisions if d.label == EXCLUDED),
        "total": len(decisions),
    }
