# Generated by Django 4.2.7

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Run',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('run', 'Odometría'), ('simulate', 'Simulación'), ('eval', 'Evaluación'), ('export_map', 'Exportación de mapa')], max_length=20, verbose_name='Comando')),
                ('preset', models.CharField(blank=True, max_length=50, verbose_name='Escena')),
                ('seed', models.IntegerField(blank=True, null=True, verbose_name='Semilla')),
                ('dataset', models.CharField(blank=True, max_length=500, verbose_name='Dataset')),
                ('output_dir', models.CharField(blank=True, max_length=500, verbose_name='Directorio de salida')),
                ('config', models.TextField(blank=True, default='{}', verbose_name='Configuración (JSON)')),
                ('scans', models.PositiveIntegerField(default=0, verbose_name='Barridos')),
                ('keyframes', models.PositiveIntegerField(default=0, verbose_name='Keyframes')),
                ('loops', models.PositiveIntegerField(default=0, verbose_name='Lazos aceptados')),
                ('rmse', models.FloatField(blank=True, null=True, verbose_name='ATE RMSE (m)')),
                ('status', models.CharField(choices=[('ok', 'Completada'), ('failed', 'Fallida')], default='ok', max_length=20, verbose_name='Estado')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Corrida',
                'verbose_name_plural': 'Corridas',
                'ordering': ['-created_at', '-id'],
            },
        ),
    ]
