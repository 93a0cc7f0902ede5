from datetime import datetime
from typing import Optional

from sqlalchemy import String, Integer, Float, ForeignKey, DateTime, Boolean, JSON, UniqueConstraint
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


class Base(DeclarativeBase):
    pass


class MissionRun(Base):
    __tablename__ = "mission_runs"
    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    plan_name: Mapped[str] = mapped_column(String(120), index=True)
    scenario: Mapped[str] = mapped_column(String(120), index=True)
    variant: Mapped[Optional[str]] = mapped_column(String(120))
    seed: Mapped[int] = mapped_column(Integer)
    digest: Mapped[str] = mapped_column(String(64))
    complete: Mapped[bool] = mapped_column(Boolean, default=False)
    incomplete_reason: Mapped[str] = mapped_column(String(500), default="")
    anomaly_count: Mapped[int] = mapped_column(Integer, default=0)
    summary: Mapped[dict] = mapped_column(JSON, default=dict)
    log_path: Mapped[Optional[str]] = mapped_column(String(1000))
    started_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow)

    findings: Mapped[list["CheckFinding"]] = relationship(back_populates="run", cascade="all, delete-orphan")


class CheckFinding(Base):
    __tablename__ = "check_findings"
    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("mission_runs.id"), index=True)
    checkpoint: Mapped[int] = mapped_column(Integer)
    label: Mapped[str] = mapped_column(String(120), default="")
    check: Mapped[str] = mapped_column(String(32))
    status: Mapped[str] = mapped_column(String(16))
    anomalous: Mapped[bool] = mapped_column(Boolean, default=False)
    reason: Mapped[str] = mapped_column(String(500), default="")
    attempts: Mapped[int] = mapped_column(Integer, default=0)
    pose_x: Mapped[Optional[float]] = mapped_column(Float)
    pose_y: Mapped[Optional[float]] = mapped_column(Float)
    values: Mapped[dict] = mapped_column(JSON, default=dict)

    run: Mapped[MissionRun] = relationship(back_populates="findings")

    __table_args__ = (
        UniqueConstraint('run_id', 'checkpoint', 'check', name='uq_finding_run_checkpoint_check'),
    )
