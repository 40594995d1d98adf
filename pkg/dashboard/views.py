import json
from pathlib import Path

from django.http import JsonResponse
from django.shortcuts import get_object_or_404
from django.views.decorators.http import require_GET

from .models import Run

TRAJECTORY_FILE = 'trajectory.txt'


def run_summary(run):
    return {
        'id': run.id,
        'command': run.command,
        'preset': run.preset,
        'seed': run.seed,
        'dataset': run.dataset,
        'output_dir': run.output_dir,
        'scans': run.scans,
        'keyframes': run.keyframes,
        'loops': run.loops,
        'rmse': run.rmse,
        'status': run.status,
        'created_at': run.created_at.isoformat(),
    }


@require_GET
def runs_list(request):
    runs = Run.objects.all()

    command = request.GET.get('command', '')
    if command:
        runs = runs.filter(command=command)
    status = request.GET.get('status', '')
    if status:
        runs = runs.filter(status=status)

    return JsonResponse({'runs': [run_summary(run) for run in runs]})


@require_GET
def run_detail(request, run_id):
    run = get_object_or_404(Run, id=run_id)

    data = run_summary(run)
    try:
        data['config'] = json.loads(run.config or '{}')
    except ValueError:
        data['config'] = run.config

    # Trayectoria TUM si la corrida dejó una
    data['trajectory'] = None
    if run.output_dir:
        path = Path(run.output_dir) / TRAJECTORY_FILE
        if path.is_file():
            data['trajectory'] = path.read_text(encoding='utf-8')

    return JsonResponse(data)
